#pragma once

#include <cctype>
#include <string>
#include <vector>

namespace testing {

/// Small well-formedness check: balanced, properly nested elements, quoted
/// attribute values, a single root and nothing but whitespace outside it.
inline bool well_formed_xml(const std::string& s) {
    std::vector<std::string> stack;
    std::size_t i = 0, roots = 0;
    auto is_name = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == ':' || c == '.'; };
    while (i < s.size()) {
        if (s[i] != '<') {
            if (stack.empty() && !std::isspace(static_cast<unsigned char>(s[i]))) return false;
            if (s[i] == '&') {
                const auto semi = s.find(';', i);
                if (semi == std::string::npos) return false;
                i = semi;
            }
            ++i;
            continue;
        }
        if (s.compare(i, 5, "<?xml") == 0) {
            const auto end = s.find("?>", i);
            if (end == std::string::npos || i != 0) return false;
            i = end + 2;
            continue;
        }
        if (s.compare(i, 4, "<!--") == 0) {
            const auto end = s.find("-->", i);
            if (end == std::string::npos) return false;
            i = end + 3;
            continue;
        }
        const bool closing = i + 1 < s.size() && s[i + 1] == '/';
        std::size_t j = i + (closing ? 2 : 1);
        const std::size_t name_start = j;
        while (j < s.size() && is_name(s[j])) ++j;
        if (j == name_start) return false;
        const std::string name = s.substr(name_start, j - name_start);
        if (closing) {
            while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
            if (j >= s.size() || s[j] != '>' || stack.empty() || stack.back() != name) return false;
            stack.pop_back();
            i = j + 1;
            continue;
        }
        // attributes
        bool self_closing = false;
        while (true) {
            while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
            if (j >= s.size()) return false;
            if (s[j] == '>') break;
            if (s[j] == '/' && j + 1 < s.size() && s[j + 1] == '>') {
                self_closing = true;
                ++j;
                break;
            }
            const std::size_t a = j;
            while (j < s.size() && is_name(s[j])) ++j;
            if (j == a || j >= s.size() || s[j] != '=') return false;
            ++j;
            if (j >= s.size() || (s[j] != '"' && s[j] != '\'')) return false;
            const char q = s[j];
            const auto close = s.find(q, j + 1);
            if (close == std::string::npos || s.substr(j + 1, close - j - 1).find('<') != std::string::npos)
                return false;
            j = close + 1;
        }
        if (stack.empty()) ++roots;
        if (!self_closing) stack.push_back(name);
        i = j + 1;
    }
    return stack.empty() && roots == 1;
}

}  // namespace testing
