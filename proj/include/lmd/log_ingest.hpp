#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "lmd/parallel.hpp"

namespace lmd {

using Timestamp = std::int64_t;

enum class Interaction : std::uint8_t { Login, Connection, Access, Creation };
enum class AuthType : std::uint8_t { Unknown, Kerberos, NTLM, Negotiate, MicrosoftAuthPackage, NetWare, Wave, CygwinLsa };
enum class LogonType : std::uint8_t { Unknown, Network, Interactive, Batch, Service, RemoteInteractive };
enum class Orientation : std::uint8_t { Unknown, LogOn, LogOff, TGT, TGS };
enum class Outcome : std::uint8_t { Unknown, Success, Failure };

inline constexpr std::size_t kInteractionCount = 4;
inline constexpr std::size_t kAuthTypeCount = 8;
inline constexpr std::size_t kLogonTypeCount = 6;
inline constexpr std::size_t kOrientationCount = 5;
inline constexpr std::size_t kOutcomeCount = 3;

/// Canonical spellings, indexed by enum value. These are the category
/// vocabularies written into graph and dataset headers.
inline constexpr std::array<std::string_view, kInteractionCount> kInteractionNames{"login", "connection", "access",
                                                                                   "creation"};
inline constexpr std::array<std::string_view, kAuthTypeCount> kAuthTypeNames{
    "Unknown", "Kerberos", "NTLM", "Negotiate", "MICROSOFT_AUTHENTICATION_PACKAGE_V1_0",
    "NETWARE_AUTHENTICATION_PACKAGE_V1_0", "Wave", "CygwinLsa"};
inline constexpr std::array<std::string_view, kLogonTypeCount> kLogonTypeNames{
    "Unknown", "Network", "Interactive", "Batch", "Service", "RemoteInteractive"};
inline constexpr std::array<std::string_view, kOrientationCount> kOrientationNames{"Unknown", "LogOn", "LogOff",
                                                                                   "TGT", "TGS"};
inline constexpr std::array<std::string_view, kOutcomeCount> kOutcomeNames{"Unknown", "Success", "Failure"};

// Lenient category lookups: anything unrecognised (including "?") is Unknown.
AuthType parse_auth_type(std::string_view s) noexcept;
LogonType parse_logon_type(std::string_view s) noexcept;
Orientation parse_orientation(std::string_view s) noexcept;
Outcome parse_outcome(std::string_view s) noexcept;
std::optional<Interaction> parse_interaction(std::string_view s) noexcept;

template <typename E>
constexpr std::size_t index_of(E e) noexcept {
    return static_cast<std::size_t>(e);
}

/// One normalized authentication, file, or process event.
struct LogRecord {
    Timestamp t = 0;
    std::string src_user;
    std::string dst_user;
    std::string src_device;
    std::string dst_device;
    AuthType auth_type = AuthType::Unknown;
    LogonType logon_type = LogonType::Unknown;
    Orientation orientation = Orientation::Unknown;
    Outcome outcome = Outcome::Unknown;
    std::optional<std::string> object;
    Interaction interaction = Interaction::Login;

    bool operator==(const LogRecord&) const = default;
};

struct LogRecordHash {
    std::size_t operator()(const LogRecord& r) const noexcept;
};

enum class LogFormat { Lanl, Cert, Generic };

LogFormat parse_log_format(std::string_view name);
std::string_view log_format_name(LogFormat f) noexcept;

/// Parses one row. Throws MalformedRecord on wrong field count, a
/// non-numeric timestamp, or a record violating the per-interaction
/// required-field rules.
LogRecord parse_record(std::string_view line, LogFormat format);

/// Canonical generic-format line (one JSON object, no trailing newline).
std::string to_generic_json(const LogRecord& r);

/// 9-field comma-separated LANL row. Only meaningful for login records.
std::string to_lanl_line(const LogRecord& r);

struct IngestStats {
    std::size_t lines = 0;
    std::size_t parsed = 0;
    std::size_t malformed = 0;
    std::vector<std::string> first_errors;  // at most kMaxErrorSamples
    static constexpr std::size_t kMaxErrorSamples = 8;
};

struct IngestResult {
    std::vector<LogRecord> records;
    IngestStats stats;
};

/// Splits text into lines (LF or CRLF); a final trailing newline does not
/// start an extra line.
std::vector<std::string_view> split_lines(std::string_view text);

/// Parses lines in parallel chunks; output order follows input order.
IngestResult parse_lines(std::span<const std::string_view> lines, LogFormat format, const WorkerPool& pool);

IngestResult read_log_file(const std::string& path, LogFormat format, const WorkerPool& pool);

/// Key identifying a malicious login: (time, user, source device, destination device).
struct LabelKey {
    Timestamp t = 0;
    std::string user;
    std::string src_device;
    std::string dst_device;

    auto operator<=>(const LabelKey&) const = default;
};

LabelKey label_key_of(const LogRecord& r);

struct LabelSet {
    std::set<LabelKey> entries;

    bool contains(const LabelKey& k) const { return entries.count(k) != 0; }
    std::size_t size() const noexcept { return entries.size(); }
};

struct LabelLoadResult {
    LabelSet labels;
    IngestStats stats;
};

LabelKey parse_label_row(std::string_view line, LogFormat format);
LabelLoadResult parse_label_lines(std::span<const std::string_view> lines, LogFormat format);
LabelLoadResult load_labels(const std::string& path, LogFormat format);

/// 4-field red-team row: time,user,src_device,dst_device.
std::string to_label_line(const LabelKey& k);

/// Stable sort by timestamp (ties keep input order), exact duplicates collapsed
/// to their first occurrence.
std::vector<LogRecord> normalize_stream(std::vector<LogRecord> records);

} // namespace lmd
