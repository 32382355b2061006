#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace atc::csv {

struct Row {
    std::size_t line = 0;  // physical line where the record starts, 1-based
    std::vector<std::string> fields;
};

/// RFC 4180 reader: quoted fields may contain commas, doubled quotes and
/// line breaks. Accepts LF or CRLF record terminators. Blank lines are skipped.
/// Throws ParseError on an unterminated quote or stray quote character.
std::vector<Row> parse(std::string_view text);

/// Quotes a field when it contains a comma, quote, CR or LF.
std::string quote(std::string_view field);

std::string join(const std::vector<std::string>& fields);

/// Parses `text`, checks that the header equals `expected` and returns the
/// data rows. Every row must have exactly `expected.size()` fields.
std::vector<Row> read_table(std::string_view text, const std::vector<std::string>& expected);

}  // namespace atc::csv
