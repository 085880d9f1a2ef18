#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kwtrack {

enum class TokenKind { hashtag, mention, word };

inline std::string_view to_string(TokenKind k) {
    switch (k) {
        case TokenKind::hashtag: return "hashtag";
        case TokenKind::mention: return "mention";
        case TokenKind::word: return "word";
    }
    return "word";
}

inline TokenKind kind_of(std::string_view surface) {
    if (!surface.empty() && surface.front() == '#') return TokenKind::hashtag;
    if (!surface.empty() && surface.front() == '@') return TokenKind::mention;
    return TokenKind::word;
}

struct Token {
    std::string surface;
    TokenKind kind = TokenKind::word;

    friend bool operator==(const Token&, const Token&) = default;
    friend auto operator<=>(const Token& a, const Token& b) { return a.surface <=> b.surface; }
};

inline Token make_token(std::string surface) {
    TokenKind k = kind_of(surface);
    return Token{std::move(surface), k};
}

namespace detail {

// Decodes one UTF-8 code point starting at `pos`; advances `pos`. Invalid
// sequences yield U+FFFD and consume one byte.
inline char32_t next_code_point(std::string_view s, std::size_t& pos) {
    auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) {
        ++pos;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++pos;
        return 0xFFFD;
    }
    if (pos + len > s.size()) {
        ++pos;
        return 0xFFFD;
    }
    for (int i = 1; i < len; ++i) {
        auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) {
            ++pos;
            return 0xFFFD;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    pos += len;
    return cp;
}

inline void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Letters and digits of any script count as word characters; punctuation,
// symbols, emoji, joiners and private-use code points do not.
inline bool is_word_char(char32_t c) {
    if (c < 0x80) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
    }
    if (c <= 0xBF || c == 0xD7 || c == 0xF7) return false;
    if (c >= 0x2000 && c <= 0x2BFF) return false;
    if (c >= 0x2E00 && c <= 0x2E7F) return false;
    if (c >= 0x3000 && c <= 0x303F) return false;
    if (c >= 0xD800 && c <= 0xF8FF) return false;
    if (c >= 0xFE00 && c <= 0xFE4F) return false;
    if (c >= 0xFF00 && c <= 0xFF0F) return false;
    if (c == 0xFFFD || c == 0xFEFF) return false;
    if (c >= 0x1F000 && c <= 0x1FAFF) return false;
    if (c >= 0xE0000) return false;
    return true;
}

inline bool is_space(char32_t c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v' || c == 0xA0 ||
           (c >= 0x2000 && c <= 0x200B) || c == 0x3000;
}

inline char32_t to_lower(char32_t c) {
    if (c >= 'A' && c <= 'Z') return c + 32;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
    return c;
}

inline bool is_apostrophe(char32_t c) { return c == '\'' || c == 0x2019; }

inline bool starts_with_icase(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        char a = s[i];
        if (a >= 'A' && a <= 'Z') a = static_cast<char>(a + 32);
        if (a != prefix[i]) return false;
    }
    return true;
}

inline bool is_url_start(std::string_view s) {
    return starts_with_icase(s, "http://") || starts_with_icase(s, "https://") ||
           starts_with_icase(s, "www.");
}

}  // namespace detail

// Splits a document text into normalized tokens.
//
// Text is lowercased, whitespace-delimited chunks are scanned for URLs (which
// are cut through the end of the chunk), and the remainder is split on every
// non-word character. A '#' or '@' opening a token sets its kind; an
// apostrophe between two word characters stays inside the token. Tokens whose
// body (prefix excluded) is shorter than two code points are dropped.
inline std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    std::string body;
    char prefix = 0;
    std::size_t body_len = 0;

    auto flush = [&] {
        if (body_len >= 2) {
            std::string surface;
            if (prefix != 0) surface.push_back(prefix);
            surface += body;
            TokenKind k = prefix == '#' ? TokenKind::hashtag
                          : prefix == '@' ? TokenKind::mention
                                          : TokenKind::word;
            out.push_back(Token{std::move(surface), k});
        }
        body.clear();
        body_len = 0;
        prefix = 0;
    };

    std::size_t pos = 0;
    while (pos < text.size()) {
        if (body.empty() && prefix == 0 && detail::is_url_start(text.substr(pos))) {
            while (pos < text.size()) {
                std::size_t save = pos;
                if (detail::is_space(detail::next_code_point(text, pos))) {
                    pos = save;
                    break;
                }
            }
            continue;
        }
        char32_t c = detail::next_code_point(text, pos);
        if (detail::is_word_char(c)) {
            detail::append_utf8(body, detail::to_lower(c));
            ++body_len;
        } else if ((c == '#' || c == '@') && body.empty()) {
            prefix = static_cast<char>(c);
        } else if (detail::is_apostrophe(c) && !body.empty() && pos < text.size()) {
            std::size_t peek = pos;
            char32_t next = detail::next_code_point(text, peek);
            if (detail::is_word_char(next)) {
                body.push_back('\'');
            } else {
                flush();
            }
        } else {
            flush();
        }
    }
    flush();
    return out;
}

}  // namespace kwtrack
