#include "atc/csv.hpp"

#include "atc/error.hpp"

namespace atc::csv {

std::vector<Row> parse(std::string_view text) {
    std::vector<Row> rows;
    std::size_t line = 1;
    std::size_t i = 0;
    const std::size_t n = text.size();

    while (i < n) {
        Row row;
        row.line = line;
        std::string field;
        bool in_quotes = false;
        bool was_quoted = false;
        bool row_done = false;
        bool any_content = false;

        while (i < n && !row_done) {
            char c = text[i];
            if (in_quotes) {
                if (c == '"') {
                    if (i + 1 < n && text[i + 1] == '"') {
                        field.push_back('"');
                        i += 2;
                    } else {
                        in_quotes = false;
                        ++i;
                    }
                } else {
                    if (c == '\n') ++line;
                    field.push_back(c);
                    ++i;
                }
                continue;
            }
            switch (c) {
                case '"':
                    if (!field.empty() || was_quoted)
                        throw ParseError(line, "record", "unexpected quote inside unquoted field");
                    in_quotes = true;
                    was_quoted = true;
                    any_content = true;
                    ++i;
                    break;
                case ',':
                    row.fields.push_back(std::move(field));
                    field.clear();
                    was_quoted = false;
                    any_content = true;
                    ++i;
                    break;
                case '\r':
                    if (i + 1 < n && text[i + 1] == '\n') ++i;
                    [[fallthrough]];
                case '\n':
                    ++i;
                    ++line;
                    row_done = true;
                    break;
                default:
                    if (was_quoted)
                        throw ParseError(line, "record", "characters after closing quote");
                    field.push_back(c);
                    any_content = true;
                    ++i;
            }
        }
        if (in_quotes) throw ParseError(row.line, "record", "unterminated quoted field");
        if (!any_content && field.empty()) continue;  // blank line
        row.fields.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string quote(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string join(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += quote(fields[i]);
    }
    return out;
}

std::vector<Row> read_table(std::string_view text, const std::vector<std::string>& expected) {
    auto rows = parse(text);
    if (rows.empty()) throw ParseError(1, "header", "missing header");
    if (rows.front().fields != expected) {
        std::string want;
        for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
        throw ParseError(rows.front().line, "header", "expected `" + want + "`");
    }
    rows.erase(rows.begin());
    for (const auto& r : rows) {
        if (r.fields.size() != expected.size())
            throw ParseError(r.line, "record",
                             "expected " + std::to_string(expected.size()) + " fields, got " +
                                 std::to_string(r.fields.size()));
    }
    return rows;
}

}  // namespace atc::csv
