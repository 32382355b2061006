#include "atc/events.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <iterator>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "atc/csv.hpp"
#include "atc/error.hpp"

namespace atc {
namespace {

bool is_bin_like(std::string_view s) {
    if (s.size() < 2 || s[0] != 'T') return false;
    return std::all_of(s.begin() + 1, s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        auto c = static_cast<unsigned char>(s[i]);
        std::size_t len;
        if (c < 0x80) len = 1;
        else if ((c >> 5) == 0x6) len = 2;
        else if ((c >> 4) == 0xe) len = 3;
        else if ((c >> 3) == 0x1e) len = 4;
        else return false;
        if (i + len > s.size()) return false;
        for (std::size_t k = 1; k < len; ++k)
            if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
        i += len;
    }
    return true;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

int read_digits(std::string_view s, std::size_t pos, std::size_t count) {
    if (pos + count > s.size()) throw std::invalid_argument("truncated date-time");
    int v = 0;
    for (std::size_t i = pos; i < pos + count; ++i) {
        if (s[i] < '0' || s[i] > '9') throw std::invalid_argument("expected digit");
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

void expect_char(std::string_view s, std::size_t pos, std::string_view allowed) {
    if (pos >= s.size() || allowed.find(s[pos]) == std::string_view::npos)
        throw std::invalid_argument("malformed date-time");
}

double parse_rfc3339(std::string_view s) {
    using namespace std::chrono;
    int y = read_digits(s, 0, 4);
    expect_char(s, 4, "-");
    int mo = read_digits(s, 5, 2);
    expect_char(s, 7, "-");
    int d = read_digits(s, 8, 2);
    expect_char(s, 10, "Tt ");
    int hh = read_digits(s, 11, 2);
    expect_char(s, 13, ":");
    int mm = read_digits(s, 14, 2);
    expect_char(s, 16, ":");
    int ss = read_digits(s, 17, 2);
    std::size_t pos = 19;

    year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60) throw std::invalid_argument("date-time out of range");

    double frac = 0.0;
    if (pos < s.size() && s[pos] == '.') {
        std::size_t start = pos;
        ++pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
        if (pos == start + 1) throw std::invalid_argument("empty fraction");
        std::string digits = "0" + std::string(s.substr(start, pos - start));
        frac = std::stod(digits);
    }

    int offset = 0;
    if (pos >= s.size()) throw std::invalid_argument("missing time offset");
    if (s[pos] == 'Z' || s[pos] == 'z') {
        ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
        int sign = s[pos] == '+' ? 1 : -1;
        int oh = read_digits(s, pos + 1, 2);
        expect_char(s, pos + 3, ":");
        int om = read_digits(s, pos + 4, 2);
        if (oh > 23 || om > 59) throw std::invalid_argument("offset out of range");
        offset = sign * (oh * 3600 + om * 60);
        pos += 6;
    } else {
        throw std::invalid_argument("missing time offset");
    }
    if (pos != s.size()) throw std::invalid_argument("trailing characters");

    auto days = sys_days{ymd}.time_since_epoch().count();
    double whole = static_cast<double>(days) * 86400.0 + hh * 3600.0 + mm * 60.0 + ss - offset;
    return whole + frac;
}

EventRecord make_record(std::size_t line, std::string user, std::string_view action,
                        std::string_view timestamp) {
    if (user.empty()) throw ParseError(line, "user_id", "empty user id");
    if (action.empty()) throw ParseError(line, "action", "empty action label");
    double ts;
    try {
        ts = parse_timestamp(timestamp);
    } catch (const std::invalid_argument& e) {
        throw ParseError(line, "timestamp", "invalid timestamp `" + std::string(timestamp) + "`: " + e.what());
    }
    if (!std::isfinite(ts) || ts < 0.0)
        throw ParseError(line, "timestamp", "timestamp must be finite and non-negative");
    return EventRecord{std::move(user), escape_action(action), ts};
}

std::vector<EventRecord> parse_csv_log(std::string_view text) {
    auto rows = csv::parse(text);
    if (rows.empty()) throw ParseError(1, "header", "missing header `user_id,action,timestamp`");
    const std::vector<std::string> expected{"user_id", "action", "timestamp"};
    auto header = rows.front().fields;
    if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);
    if (header != expected)
        throw ParseError(rows.front().line, "header", "expected `user_id,action,timestamp`");

    std::vector<EventRecord> out;
    out.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        auto& row = rows[r];
        if (row.fields.size() != 3) {
            static const char* names[] = {"user_id", "action", "timestamp"};
            std::string field = row.fields.size() < 3 ? names[row.fields.size()] : "record";
            throw ParseError(row.line, field,
                             "expected 3 fields, got " + std::to_string(row.fields.size()));
        }
        out.push_back(make_record(row.line, std::move(row.fields[0]), row.fields[1], row.fields[2]));
    }
    return out;
}

std::string json_scalar_text(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    if (v.is_number_float()) {
        char buf[64];
        auto res = std::to_chars(buf, buf + sizeof buf, v.get<double>());
        return std::string(buf, res.ptr);
    }
    throw std::invalid_argument("expected string or number");
}

std::vector<EventRecord> parse_jsonl_log(std::string_view text) {
    std::vector<EventRecord> out;
    std::size_t line = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        ++line;
        auto nl = text.find('\n', pos);
        auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
        if (trim(raw).empty()) continue;

        auto obj = nlohmann::json::parse(raw, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) throw ParseError(line, "record", "not a JSON object");
        std::string fields[3];
        static const char* names[] = {"user_id", "action", "timestamp"};
        for (int f = 0; f < 3; ++f) {
            auto it = obj.find(names[f]);
            if (it == obj.end()) throw ParseError(line, names[f], "missing key");
            try {
                fields[f] = json_scalar_text(*it);
            } catch (const std::invalid_argument& e) {
                throw ParseError(line, names[f], e.what());
            }
        }
        out.push_back(make_record(line, std::move(fields[0]), fields[1], fields[2]));
    }
    return out;
}

}  // namespace

LogFormat parse_log_format(std::string_view name) {
    if (name == "csv") return LogFormat::csv;
    if (name == "jsonl") return LogFormat::jsonl;
    throw UsageError("unknown log format `" + std::string(name) + "` (expected csv or jsonl)");
}

std::string escape_action(std::string_view label) {
    std::string out;
    out.reserve(label.size() + 1);
    if (is_bin_like(label)) out.push_back('\\');
    for (char c : label) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '|': out += "\\|"; break;
            case ' ': out += "\\s"; break;
            case '\t': out += "\\t"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string unescape_action(std::string_view token) {
    std::string out;
    out.reserve(token.size());
    for (std::size_t i = 0; i < token.size(); ++i) {
        char c = token[i];
        if (c != '\\' || i + 1 == token.size()) {
            out.push_back(c);
            continue;
        }
        char e = token[++i];
        switch (e) {
            case 's': out.push_back(' '); break;
            case 't': out.push_back('\t'); break;
            case 'n': out.push_back('\n'); break;
            case 'r': out.push_back('\r'); break;
            default: out.push_back(e);  // `\\`, `\|`, and the `\T` bin-guard
        }
    }
    return out;
}

double parse_timestamp(std::string_view text) {
    auto s = trim(text);
    if (s.empty()) throw std::invalid_argument("empty timestamp");
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc() && ptr == s.data() + s.size()) return v;
    return parse_rfc3339(s);
}

std::vector<EventRecord> parse_event_log(std::string_view text, LogFormat format) {
    if (!valid_utf8(text)) throw DataError("event log is not valid UTF-8");
    return format == LogFormat::csv ? parse_csv_log(text) : parse_jsonl_log(text);
}

std::vector<EventRecord> parse_event_log(std::istream& source, LogFormat format) {
    std::string text{std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>()};
    return parse_event_log(text, format);
}

std::vector<UserStream> build_user_streams(std::vector<EventRecord> records, std::size_t min_actions) {
    if (min_actions < 2) throw std::invalid_argument("min_actions must be at least 2");

    std::map<std::string, std::vector<EventRecord>> by_user;
    for (auto& r : records) by_user[r.user_id].push_back(std::move(r));

    std::vector<UserStream> out;
    for (auto& [user, events] : by_user) {
        if (events.size() < min_actions) continue;
        std::stable_sort(events.begin(), events.end(),
                         [](const EventRecord& a, const EventRecord& b) { return a.timestamp < b.timestamp; });
        out.push_back(UserStream{user, std::move(events)});
    }
    if (out.empty())
        throw DataError("no usable users: every user has fewer than " + std::to_string(min_actions) + " actions");
    return out;
}

IntervalSample compute_intervals(const UserStream& stream) {
    IntervalSample out;
    const auto& ev = stream.events;
    if (ev.size() < 2) return out;
    out.values.reserve(ev.size() - 1);
    for (std::size_t j = 0; j + 1 < ev.size(); ++j) out.values.push_back(ev[j + 1].timestamp - ev[j].timestamp);
    return out;
}

IntervalSample pool_intervals(const std::vector<UserStream>& streams) {
    IntervalSample out;
    for (const auto& s : streams) {
        auto iv = compute_intervals(s);
        out.values.insert(out.values.end(), iv.values.begin(), iv.values.end());
    }
    return out;
}

}  // namespace atc
