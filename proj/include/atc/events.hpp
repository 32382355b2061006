#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace atc {

/// One observed action. `action` holds the escaped token form (see escape_action).
struct EventRecord {
    std::string user_id;
    std::string action;
    double timestamp = 0.0;  // epoch seconds

    friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

/// One user's events, ascending by timestamp with input order kept for ties.
struct UserStream {
    std::string user_id;
    std::vector<EventRecord> events;

    friend bool operator==(const UserStream&, const UserStream&) = default;
};

/// Non-negative inter-action intervals in seconds.
struct IntervalSample {
    std::vector<double> values;
};

enum class LogFormat { csv, jsonl };

LogFormat parse_log_format(std::string_view name);

inline constexpr std::size_t kDefaultMinActions = 10;

// Action labels share the token namespace with bin labels (`T<digits>`) and
// trigram joins (`|`). Escaping keeps every label distinct and separator-free:
//   `\` -> `\\`, `|` -> `\|`, space -> `\s`, tab -> `\t`, LF -> `\n`, CR -> `\r`,
//   and a label that looks like a bin token gets a leading `\` (`T3` -> `\T3`).
std::string escape_action(std::string_view label);
std::string unescape_action(std::string_view token);

/// Epoch seconds from a numeric literal or an RFC 3339 date-time.
/// Throws std::invalid_argument on anything else.
double parse_timestamp(std::string_view text);

/// Reads a UTF-8 event log. Records come back in input order with escaped
/// action labels. Errors name the 1-based line and the offending field.
std::vector<EventRecord> parse_event_log(std::istream& source, LogFormat format);
std::vector<EventRecord> parse_event_log(std::string_view text, LogFormat format);

/// Groups by user, sorts each user stably by time, drops users with fewer than
/// `min_actions` events. Output is ordered by user id. Throws DataError when
/// nobody survives the filter.
std::vector<UserStream> build_user_streams(std::vector<EventRecord> records,
                                           std::size_t min_actions = kDefaultMinActions);

/// J-1 adjacent differences for a stream of J events.
IntervalSample compute_intervals(const UserStream& stream);

/// All intervals of all users, concatenated in stream order.
IntervalSample pool_intervals(const std::vector<UserStream>& streams);

}  // namespace atc
