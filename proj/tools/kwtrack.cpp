// kwtrack command line: ingest, simulate, forecast, serve, train-embed, drift.

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "kwtrack/corpus.hpp"
#include "kwtrack/embedding.hpp"
#include "kwtrack/evaluation.hpp"
#include "kwtrack/forecast.hpp"
#include "kwtrack/service.hpp"
#include "kwtrack/api.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kwtrack;

namespace {

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("cannot read " + p.string());
    return json::parse(in);
}

void write_text(const fs::path& p, const std::string& s) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw Error("cannot write " + p.string());
    out << s;
}

Instant parse_time(const std::string& s) {
    auto t = parse_iso8601(s);
    if (!t) throw std::invalid_argument("bad ISO-8601 time: " + s);
    return *t;
}

// A single NDJSON file, or every *.ndjson file of a directory.
std::vector<Document> load_corpus(const fs::path& p) {
    std::vector<fs::path> files;
    if (fs::is_directory(p)) {
        for (const auto& e : fs::directory_iterator(p))
            if (e.path().extension() == ".ndjson" || e.path().extension() == ".jsonl") files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(p);
    }
    std::vector<Document> docs;
    std::set<std::string> seen;
    for (const auto& f : files)
        for (auto& d : ingest_all(f).window.documents)
            if (seen.insert(d.id).second) docs.push_back(std::move(d));
    sort_documents(docs);
    return docs;
}

std::atomic<bool> g_stop{false};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kwtrack: dynamic keyword tracking for social media streams"};
    app.require_subcommand(1);

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "Read an NDJSON export into a normalized corpus window");
    std::string ingest_in, ingest_out, ingest_start, ingest_end;
    ingest_cmd->add_option("path", ingest_in, "NDJSON file")->required();
    ingest_cmd->add_option("--out", ingest_out, "Output window (NDJSON)")->required();
    ingest_cmd->add_option("--start", ingest_start, "Window start, ISO-8601 UTC");
    ingest_cmd->add_option("--end", ingest_end, "Window end (exclusive), ISO-8601 UTC");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Replay a multi-round corpus through the monitors");
    std::string sim_corpus, sim_monitors = "dynamic,static,last-top", sim_report, sim_csv, sim_config, sim_start;
    std::size_t sim_rounds = 12, sim_m = 20, sim_n = 15;
    double sim_round_days = 7.0, sim_bucket_hours = 12.0;
    std::uint64_t sim_seed = 1;
    sim_cmd->add_option("corpus", sim_corpus, "NDJSON file or directory")->required();
    sim_cmd->add_option("--monitors", sim_monitors, "Comma-separated: dynamic, static, last-top");
    sim_cmd->add_option("--rounds", sim_rounds, "Number of rounds");
    sim_cmd->add_option("--round-days", sim_round_days, "Round length in days");
    sim_cmd->add_option("--bucket-hours", sim_bucket_hours, "Frequency bucket width in hours");
    sim_cmd->add_option("--start", sim_start, "First round start (default: first document)");
    sim_cmd->add_option("--m", sim_m, "Ground-truth and retrieved size");
    sim_cmd->add_option("--n", sim_n, "Keyword cap");
    sim_cmd->add_option("--seed", sim_seed, "Embedding seed base");
    sim_cmd->add_option("--config", sim_config, "Pipeline config JSON");
    sim_cmd->add_option("--report", sim_report, "JSON report path");
    sim_cmd->add_option("--csv", sim_csv, "Per-round CSV path");

    // forecast
    auto* fc_cmd = app.add_subcommand("forecast", "Fit the ARIMA grid to one series and forecast");
    std::string fc_in;
    int fc_h = 15, fc_max_p = 3, fc_max_d = 2, fc_max_q = 3;
    double fc_level = 0.95;
    fc_cmd->add_option("series", fc_in, "JSON: {token, counts, origin, bucket_seconds} or a bare count array")->required();
    fc_cmd->set_help_flag("--help", "Print this help message and exit");  // frees -h for the horizon
    fc_cmd->add_option("--h", fc_h, "Horizon in buckets");
    fc_cmd->add_option("--level", fc_level, "Interval level");
    fc_cmd->add_option("--max-p", fc_max_p);
    fc_cmd->add_option("--max-d", fc_max_d);
    fc_cmd->add_option("--max-q", fc_max_q);

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "Run the monitor behind the HTTP API");
    std::string serve_config, serve_mode, serve_host = "127.0.0.1";
    int serve_port = 8080;
    serve_cmd->add_option("--config", serve_config, "Service config JSON")->required();
    serve_cmd->add_option("--mode", serve_mode, "replay or live")->check(CLI::IsMember({"replay", "live"}));
    serve_cmd->add_option("--host", serve_host);
    serve_cmd->add_option("--port", serve_port);

    // train-embed
    auto* emb_cmd = app.add_subcommand("train-embed", "Train GloVe vectors on a corpus window");
    std::string emb_in, emb_out = "vectors.txt";
    GloveParams gp;
    std::int64_t emb_min_count = 1;
    int emb_window = 10;
    emb_cmd->add_option("window", emb_in, "NDJSON window")->required();
    emb_cmd->add_option("--dim", gp.dimension, "Vector dimension");
    emb_cmd->add_option("--epochs", gp.epochs);
    emb_cmd->add_option("--seed", gp.seed);
    emb_cmd->add_option("--threads", gp.threads);
    emb_cmd->add_option("--min-count", emb_min_count);
    emb_cmd->add_option("--context", emb_window, "Co-occurrence window");
    emb_cmd->add_option("--out", emb_out, "Vector file");

    // drift
    auto* drift_cmd = app.add_subcommand("drift", "Generate a synthetic drifting hashtag corpus");
    std::string drift_out, drift_config, drift_slots;
    DriftConfig dc;
    drift_cmd->add_option("--out", drift_out, "Output NDJSON")->required();
    drift_cmd->add_option("--config", drift_config, "Generator config JSON");
    drift_cmd->add_option("--seed", dc.seed);
    drift_cmd->add_option("--rounds", dc.rounds);
    drift_cmd->add_option("--docs-per-round", dc.docs_per_round);
    drift_cmd->add_option("--rotation", dc.rotation);
    drift_cmd->add_option("--slots", drift_slots, "Write the per-round slot owners as JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest_cmd) {
            TimeRange range{from_epoch_seconds(-(std::int64_t{1} << 40)), from_epoch_seconds(std::int64_t{1} << 40)};
            if (!ingest_start.empty()) range.start = parse_time(ingest_start);
            if (!ingest_end.empty()) range.end = parse_time(ingest_end);
            auto res = ingest_file(ingest_in, range);
            write_documents(ingest_out, res.window.documents);
            std::cout << json{{"lines", res.stats.lines},
                              {"accepted", res.stats.accepted},
                              {"malformed", res.stats.malformed},
                              {"out_of_range", res.stats.out_of_range},
                              {"duplicate_id", res.stats.duplicate_id}}
                             .dump(2)
                      << '\n';
        } else if (*sim_cmd) {
            SimulationConfig sc;
            if (!sim_config.empty()) sc.pipeline = read_json(sim_config).get<PipelineConfig>();
            sc.pipeline.bucket_width = Duration{static_cast<std::int64_t>(sim_bucket_hours * 3600)};
            sc.m = sim_m;
            sc.n = sim_n;
            sc.seed = sim_seed;
            sc.monitors.clear();
            std::stringstream ss(sim_monitors);
            for (std::string m; std::getline(ss, m, ',');) sc.monitors.push_back(monitor_from_string(m));
            auto docs = load_corpus(sim_corpus);
            if (docs.empty()) throw InsufficientData("corpus is empty");
            const Duration round_len{static_cast<std::int64_t>(sim_round_days * 86400)};
            Instant start = sim_start.empty() ? docs.front().timestamp : parse_time(sim_start);
            auto window = make_window(std::move(docs), {start, start + round_len * static_cast<std::int64_t>(sim_rounds)},
                                      sc.pipeline.bucket_width);
            auto rounds = split_rounds(window, round_len, sim_rounds, sc.pipeline.bucket_width);
            auto reports = simulate(rounds, sc);
            std::cout << report_table(reports);
            if (!sim_report.empty()) write_text(sim_report, report_json(reports).dump(2) + "\n");
            if (!sim_csv.empty()) write_text(sim_csv, report_csv(reports));
        } else if (*fc_cmd) {
            auto j = read_json(fc_in);
            FrequencySeries fs;
            fs.token = make_token(j.is_array() ? "series" : j.value("token", std::string("series")));
            fs.counts = j.is_array() ? j.get<std::vector<std::int64_t>>() : j.at("counts").get<std::vector<std::int64_t>>();
            if (j.is_object() && j.contains("origin")) fs.origin = parse_time(j["origin"].get<std::string>());
            if (j.is_object()) fs.bucket_width = Duration{j.value("bucket_seconds", std::int64_t{3600})};
            ForecastConfig cfg{fc_max_p, fc_max_d, fc_max_q, 0.8, fc_h, fc_level};
            auto kf = forecast_keyword(fs, cfg);
            std::vector<double> history;
            for (auto c : fs.counts) history.push_back(std::log1p(static_cast<double>(c)));
            auto out = kf ? forecast_record(fs.token.surface, fs.origin, fs.bucket_width, kf->series.values, &kf->fit, &kf->forecast)
                          : forecast_record(fs.token.surface, fs.origin, fs.bucket_width, history, nullptr, nullptr);
            std::cout << out.dump(2) << '\n';
        } else if (*serve_cmd) {
            auto cfg = read_json(serve_config).get<ServiceConfig>();
            if (!serve_mode.empty()) cfg.run_mode = run_mode_from_string(serve_mode);
            // relative paths in the config are relative to the config file
            auto base = fs::path(serve_config).parent_path();
            if (cfg.archive.is_relative()) cfg.archive = base / cfg.archive;
            if (cfg.run_dir.is_relative()) cfg.run_dir = base / cfg.run_dir;
            auto monitor = open_monitor(cfg);
            ApiServer api(*monitor);
            std::signal(SIGINT, [](int) { g_stop = true; });
            std::signal(SIGTERM, [](int) { g_stop = true; });
            int port = api.start(serve_host, serve_port);
            std::cerr << "serving run " << cfg.run_id << " (" << to_string(cfg.run_mode) << ", " << to_string(cfg.mode)
                      << ") on http://" << serve_host << ':' << port << '\n';
            while (!g_stop) {
                std::this_thread::sleep_for(std::chrono::seconds{1});
                if (cfg.run_mode == RunMode::live && monitor->refresh_due()) {
                    try {
                        monitor->refresh_round();
                        std::cerr << "refreshed round " << monitor->snapshot()->state.current_round - 1 << '\n';
                    } catch (const std::exception& e) {
                        std::cerr << "refresh failed: " << e.what() << '\n';
                        std::this_thread::sleep_for(std::chrono::seconds{30});
                    }
                }
            }
            api.stop();
        } else if (*emb_cmd) {
            auto window = ingest_all(emb_in).window;
            auto cooc = build_cooccurrence(window, emb_min_count, emb_window);
            auto model = train_glove(cooc.vocabulary, cooc.matrix, gp);
            save_embedding(model, emb_out);
            std::cerr << "vocabulary " << model.vocabulary().size() << ", final loss " << model.final_loss() << '\n';
        } else if (*drift_cmd) {
            if (!drift_config.empty()) {
                DriftConfig base = read_json(drift_config).get<DriftConfig>();
                // explicit flags win over the file
                auto flags = dc;
                dc = base;
                if (drift_cmd->count("--seed")) dc.seed = flags.seed;
                if (drift_cmd->count("--rounds")) dc.rounds = flags.rounds;
                if (drift_cmd->count("--docs-per-round")) dc.docs_per_round = flags.docs_per_round;
                if (drift_cmd->count("--rotation")) dc.rotation = flags.rotation;
            }
            auto corpus = generate_drift_corpus(dc);
            write_documents(drift_out, corpus.documents);
            if (!drift_slots.empty()) write_text(drift_slots, json{{"config", dc}, {"slot_tags", corpus.slot_tags}}.dump(2) + "\n");
            std::cerr << corpus.documents.size() << " documents over " << dc.rounds << " rounds\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
