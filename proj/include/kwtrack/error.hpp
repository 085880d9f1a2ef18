#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kwtrack {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Source file missing or unreadable.
class IngestError : public Error {
public:
    using Error::Error;
};

// Series, corpus or grid too small to produce a result.
class InsufficientData : public Error {
public:
    using Error::Error;
};

// Lookup of a token that is not in the vocabulary (or not tracked).
class NotFound : public Error {
public:
    explicit NotFound(std::string token)
        : Error("not found: " + token), token_(std::move(token)) {}

    const std::string& token() const noexcept { return token_; }

private:
    std::string token_;
};

// GloVe loss became non-finite.
class TrainingDiverged : public Error {
public:
    explicit TrainingDiverged(int epoch)
        : Error("training diverged at epoch " + std::to_string(epoch)), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

// Rejected keyword edit. `reason` is machine readable ("duplicate",
// "cap_exceeded", "out_of_vocabulary", "invalid_token", ...).
class ValidationError : public Error {
public:
    ValidationError(std::string reason, std::vector<std::string> tokens)
        : Error(describe(reason, tokens)), reason_(std::move(reason)), tokens_(std::move(tokens)) {}

    const std::string& reason() const noexcept { return reason_; }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

private:
    static std::string describe(const std::string& reason, const std::vector<std::string>& tokens) {
        std::string msg = reason;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            msg += (i == 0 ? ": " : ", ");
            msg += tokens[i];
        }
        return msg;
    }

    std::string reason_;
    std::vector<std::string> tokens_;
};

// Decision submitted against a proposal that was already decided or superseded.
class StaleProposal : public Error {
public:
    using Error::Error;
};

}  // namespace kwtrack
