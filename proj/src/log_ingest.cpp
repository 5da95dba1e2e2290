#include "lmd/log_ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <functional>
#include <unordered_set>

#include <json.hpp>

#include "lmd/binary_io.hpp"
#include "lmd/error.hpp"

namespace lmd {

namespace {

bool iequals(std::string_view a, std::string_view b) noexcept {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i]))) {
            return false;
        }
    }
    return true;
}

bool istarts_with(std::string_view s, std::string_view prefix) noexcept {
    return s.size() >= prefix.size() && iequals(s.substr(0, prefix.size()), prefix);
}

std::string_view trim(std::string_view s) noexcept {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

Timestamp parse_timestamp(std::string_view s) {
    s = trim(s);
    Timestamp v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc{} || ptr != end) {
        throw MalformedRecord("non-numeric timestamp '" + std::string(s) + "'");
    }
    if (v < 0) throw MalformedRecord("negative timestamp " + std::to_string(v));
    return v;
}

int parse_int_field(std::string_view s, std::string_view what) {
    int v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc{} || ptr != end) {
        throw MalformedRecord("bad " + std::string(what) + " '" + std::string(s) + "'");
    }
    return v;
}

// CERT timestamps: "MM/DD/YYYY HH:MM:SS" -> seconds since 1970-01-01 UTC.
Timestamp parse_cert_date(std::string_view s) {
    s = trim(s);
    if (s.size() != 19 || s[2] != '/' || s[5] != '/' || s[10] != ' ' || s[13] != ':' || s[16] != ':') {
        throw MalformedRecord("bad CERT date '" + std::string(s) + "'");
    }
    using namespace std::chrono;
    const int month = parse_int_field(s.substr(0, 2), "month");
    const int day = parse_int_field(s.substr(3, 2), "day");
    const int year = parse_int_field(s.substr(6, 4), "year");
    const int hh = parse_int_field(s.substr(11, 2), "hour");
    const int mm = parse_int_field(s.substr(14, 2), "minute");
    const int ss = parse_int_field(s.substr(17, 2), "second");
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                             std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60) throw MalformedRecord("bad CERT date '" + std::string(s) + "'");
    const auto secs = sys_days{ymd}.time_since_epoch() + hours{hh} + minutes{mm} + seconds{ss};
    const auto v = duration_cast<seconds>(secs).count();
    if (v < 0) throw MalformedRecord("CERT date before epoch");
    return v;
}

void require_entity(const std::string& v, std::string_view field) {
    if (v.empty()) throw MalformedRecord("empty " + std::string(field));
}

void validate(LogRecord& r) {
    require_entity(r.src_user, "src_user");
    if (r.dst_user.empty()) r.dst_user = r.src_user;
    switch (r.interaction) {
    case Interaction::Login:
    case Interaction::Connection:
        require_entity(r.src_device, "src_device");
        require_entity(r.dst_device, "dst_device");
        break;
    case Interaction::Access:
    case Interaction::Creation:
        if (!r.object || r.object->empty()) throw MalformedRecord("access/creation record without object");
        require_entity(r.dst_device, "dst_device");
        if (r.src_device.empty()) r.src_device = r.dst_device;
        break;
    }
}

LogRecord parse_lanl(std::string_view line) {
    const auto f = split_csv(line);
    if (f.size() != 9) throw MalformedRecord("LANL row needs 9 fields, got " + std::to_string(f.size()));
    LogRecord r;
    r.t = parse_timestamp(f[0]);
    r.src_user = std::string(f[1]);
    r.dst_user = std::string(f[2]);
    r.src_device = std::string(f[3]);
    r.dst_device = std::string(f[4]);
    r.auth_type = parse_auth_type(f[5]);
    r.logon_type = parse_logon_type(f[6]);
    r.orientation = parse_orientation(f[7]);
    r.outcome = parse_outcome(trim(f[8]));
    r.interaction = Interaction::Login;
    validate(r);
    return r;
}

// CERT rows: logon.csv (id,date,user,pc,Logon|Logoff), device.csv
// (id,date,user,pc,[file_tree,]Connect|Disconnect), file.csv
// (id,date,user,pc,filename,...).
LogRecord parse_cert(std::string_view line) {
    const auto f = split_csv(line);
    if (f.size() < 5) throw MalformedRecord("CERT row needs at least 5 fields, got " + std::to_string(f.size()));
    LogRecord r;
    r.t = parse_cert_date(f[1]);
    r.src_user = std::string(trim(f[2]));
    r.dst_user = r.src_user;
    r.src_device = std::string(trim(f[3]));
    r.dst_device = r.src_device;
    const std::string_view fifth = trim(f[4]);
    const std::string_view last = trim(f.back());
    if (f.size() == 5 && (iequals(fifth, "Logon") || iequals(fifth, "Logoff"))) {
        r.interaction = Interaction::Login;
        r.orientation = iequals(fifth, "Logon") ? Orientation::LogOn : Orientation::LogOff;
        r.logon_type = LogonType::Interactive;
        r.outcome = Outcome::Success;
    } else if (iequals(last, "Connect") || iequals(last, "Disconnect")) {
        r.interaction = Interaction::Connection;
        r.orientation = iequals(last, "Connect") ? Orientation::LogOn : Orientation::LogOff;
        r.outcome = Outcome::Success;
    } else {
        r.interaction = Interaction::Access;
        r.object = std::string(fifth);
        r.outcome = Outcome::Success;
    }
    validate(r);
    return r;
}

std::string json_string(const nlohmann::json& j, const char* key, bool required) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        if (required) throw MalformedRecord(std::string("missing field '") + key + "'");
        return {};
    }
    if (!it->is_string()) throw MalformedRecord(std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
}

LogRecord parse_generic(std::string_view line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedRecord(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw MalformedRecord("generic record must be a JSON object");
    LogRecord r;
    const auto t = j.find("t");
    if (t == j.end() || !t->is_number_integer()) throw MalformedRecord("field 't' must be an integer");
    r.t = t->get<Timestamp>();
    if (r.t < 0) throw MalformedRecord("negative timestamp");
    const auto inter = parse_interaction(json_string(j, "interaction", true));
    if (!inter) throw MalformedRecord("unknown interaction");
    r.interaction = *inter;
    r.src_user = json_string(j, "src_user", true);
    r.dst_user = json_string(j, "dst_user", false);
    r.src_device = json_string(j, "src_device", false);
    r.dst_device = json_string(j, "dst_device", false);
    r.auth_type = parse_auth_type(json_string(j, "auth_type", false));
    r.logon_type = parse_logon_type(json_string(j, "logon_type", false));
    r.orientation = parse_orientation(json_string(j, "orientation", false));
    r.outcome = parse_outcome(json_string(j, "outcome", false));
    if (auto obj = json_string(j, "object", false); !obj.empty()) r.object = std::move(obj);
    validate(r);
    return r;
}

} // namespace

AuthType parse_auth_type(std::string_view s) noexcept {
    s = trim(s);
    if (iequals(s, "Kerberos")) return AuthType::Kerberos;
    if (iequals(s, "NTLM")) return AuthType::NTLM;
    if (iequals(s, "Negotiate")) return AuthType::Negotiate;
    if (istarts_with(s, "MICROSOFT_AUTH")) return AuthType::MicrosoftAuthPackage;
    if (istarts_with(s, "NETWARE_AUTH")) return AuthType::NetWare;
    if (iequals(s, "Wave")) return AuthType::Wave;
    if (iequals(s, "CygwinLsa")) return AuthType::CygwinLsa;
    return AuthType::Unknown;
}

LogonType parse_logon_type(std::string_view s) noexcept {
    s = trim(s);
    if (iequals(s, "Network") || iequals(s, "NetworkCleartext")) return LogonType::Network;
    if (iequals(s, "Interactive") || iequals(s, "CachedInteractive") || iequals(s, "Unlock")) {
        return LogonType::Interactive;
    }
    if (iequals(s, "Batch")) return LogonType::Batch;
    if (iequals(s, "Service")) return LogonType::Service;
    if (iequals(s, "RemoteInteractive")) return LogonType::RemoteInteractive;
    return LogonType::Unknown;
}

Orientation parse_orientation(std::string_view s) noexcept {
    s = trim(s);
    if (iequals(s, "LogOn")) return Orientation::LogOn;
    if (iequals(s, "LogOff")) return Orientation::LogOff;
    if (iequals(s, "TGT")) return Orientation::TGT;
    if (iequals(s, "TGS")) return Orientation::TGS;
    return Orientation::Unknown;
}

Outcome parse_outcome(std::string_view s) noexcept {
    s = trim(s);
    if (iequals(s, "Success")) return Outcome::Success;
    if (iequals(s, "Fail") || iequals(s, "Failure")) return Outcome::Failure;
    return Outcome::Unknown;
}

std::optional<Interaction> parse_interaction(std::string_view s) noexcept {
    s = trim(s);
    for (std::size_t i = 0; i < kInteractionNames.size(); ++i) {
        if (iequals(s, kInteractionNames[i])) return static_cast<Interaction>(i);
    }
    return std::nullopt;
}

std::size_t LogRecordHash::operator()(const LogRecord& r) const noexcept {
    Fnv1a64 h;
    auto mix = [&h](std::string_view s) {
        h.update(s);
        h.update(std::string_view("\x1f", 1));
    };
    mix(std::to_string(r.t));
    mix(r.src_user);
    mix(r.dst_user);
    mix(r.src_device);
    mix(r.dst_device);
    const std::uint8_t cats[6] = {static_cast<std::uint8_t>(r.auth_type), static_cast<std::uint8_t>(r.logon_type),
                                  static_cast<std::uint8_t>(r.orientation), static_cast<std::uint8_t>(r.outcome),
                                  static_cast<std::uint8_t>(r.interaction), static_cast<std::uint8_t>(r.object ? 1 : 0)};
    h.update(cats);
    if (r.object) mix(*r.object);
    return static_cast<std::size_t>(h.digest());
}

LogFormat parse_log_format(std::string_view name) {
    if (iequals(name, "lanl")) return LogFormat::Lanl;
    if (iequals(name, "cert")) return LogFormat::Cert;
    if (iequals(name, "generic")) return LogFormat::Generic;
    throw ConfigError("unknown log format '" + std::string(name) + "' (expected lanl, cert or generic)");
}

std::string_view log_format_name(LogFormat f) noexcept {
    switch (f) {
    case LogFormat::Lanl: return "lanl";
    case LogFormat::Cert: return "cert";
    case LogFormat::Generic: return "generic";
    }
    return "?";
}

LogRecord parse_record(std::string_view line, LogFormat format) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    switch (format) {
    case LogFormat::Lanl: return parse_lanl(line);
    case LogFormat::Cert: return parse_cert(line);
    case LogFormat::Generic: return parse_generic(line);
    }
    throw MalformedRecord("unsupported format");
}

std::string to_generic_json(const LogRecord& r) {
    nlohmann::ordered_json j;
    j["t"] = r.t;
    j["src_user"] = r.src_user;
    j["dst_user"] = r.dst_user;
    j["src_device"] = r.src_device;
    j["dst_device"] = r.dst_device;
    j["auth_type"] = kAuthTypeNames[index_of(r.auth_type)];
    j["logon_type"] = kLogonTypeNames[index_of(r.logon_type)];
    j["orientation"] = kOrientationNames[index_of(r.orientation)];
    j["outcome"] = kOutcomeNames[index_of(r.outcome)];
    if (r.object) j["object"] = *r.object;
    j["interaction"] = kInteractionNames[index_of(r.interaction)];
    return j.dump();
}

std::string to_lanl_line(const LogRecord& r) {
    auto cat = [](std::string_view name) { return name == "Unknown" ? std::string("?") : std::string(name); };
    std::string out = std::to_string(r.t);
    for (const std::string* s : {&r.src_user, &r.dst_user, &r.src_device, &r.dst_device}) {
        out += ',';
        out += *s;
    }
    out += ',' + cat(kAuthTypeNames[index_of(r.auth_type)]);
    out += ',' + cat(kLogonTypeNames[index_of(r.logon_type)]);
    out += ',' + cat(kOrientationNames[index_of(r.orientation)]);
    out += ',' + (r.outcome == Outcome::Failure ? std::string("Fail") : cat(kOutcomeNames[index_of(r.outcome)]));
    return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.push_back(line);
        start = nl + 1;
    }
    return out;
}

IngestResult parse_lines(std::span<const std::string_view> lines, LogFormat format, const WorkerPool& pool) {
    constexpr std::size_t kChunk = 4096;
    const std::size_t chunks = (lines.size() + kChunk - 1) / kChunk;
    struct ChunkOut {
        std::vector<LogRecord> records;
        std::size_t malformed = 0;
        std::vector<std::string> errors;
    };
    std::vector<ChunkOut> outs(chunks);
    pool.parallel_for(chunks, [&](std::size_t c) {
        auto& out = outs[c];
        const std::size_t begin = c * kChunk;
        const std::size_t end = std::min(lines.size(), begin + kChunk);
        out.records.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
            try {
                out.records.push_back(parse_record(lines[i], format));
            } catch (const MalformedRecord& e) {
                ++out.malformed;
                if (out.errors.size() < IngestStats::kMaxErrorSamples) {
                    out.errors.push_back("line " + std::to_string(i + 1) + ": " + e.what());
                }
            }
        }
    });
    IngestResult result;
    result.stats.lines = lines.size();
    for (auto& out : outs) {
        result.stats.malformed += out.malformed;
        for (auto& e : out.errors) {
            if (result.stats.first_errors.size() < IngestStats::kMaxErrorSamples) {
                result.stats.first_errors.push_back(std::move(e));
            }
        }
        std::move(out.records.begin(), out.records.end(), std::back_inserter(result.records));
    }
    result.stats.parsed = result.records.size();
    return result;
}

IngestResult read_log_file(const std::string& path, LogFormat format, const WorkerPool& pool) {
    const std::string text = read_file_text(path);
    const auto lines = split_lines(text);
    return parse_lines(lines, format, pool);
}

LabelKey label_key_of(const LogRecord& r) { return LabelKey{r.t, r.src_user, r.src_device, r.dst_device}; }

LabelKey parse_label_row(std::string_view line, LogFormat format) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (format == LogFormat::Cert) {
        // CERT answer rows are the original log row, optionally prefixed by
        // the source file type.
        const std::size_t comma = line.find(',');
        if (comma != std::string_view::npos) {
            const auto head = trim(line.substr(0, comma));
            if (iequals(head, "logon") || iequals(head, "device") || iequals(head, "file") ||
                iequals(head, "http") || iequals(head, "email")) {
                line = line.substr(comma + 1);
            }
        }
        return label_key_of(parse_cert(line));
    }
    const auto f = split_csv(line);
    if (f.size() != 4) throw MalformedRecord("red-team row needs 4 fields, got " + std::to_string(f.size()));
    LabelKey k{parse_timestamp(f[0]), std::string(trim(f[1])), std::string(trim(f[2])), std::string(trim(f[3]))};
    if (k.user.empty() || k.src_device.empty() || k.dst_device.empty()) {
        throw MalformedRecord("red-team row with empty entity");
    }
    return k;
}

LabelLoadResult parse_label_lines(std::span<const std::string_view> lines, LogFormat format) {
    LabelLoadResult out;
    out.stats.lines = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            out.labels.entries.insert(parse_label_row(lines[i], format));
            ++out.stats.parsed;
        } catch (const MalformedRecord& e) {
            ++out.stats.malformed;
            if (out.stats.first_errors.size() < IngestStats::kMaxErrorSamples) {
                out.stats.first_errors.push_back("line " + std::to_string(i + 1) + ": " + e.what());
            }
        }
    }
    return out;
}

LabelLoadResult load_labels(const std::string& path, LogFormat format) {
    const std::string text = read_file_text(path);
    const auto lines = split_lines(text);
    return parse_label_lines(lines, format);
}

std::string to_label_line(const LabelKey& k) {
    return std::to_string(k.t) + "," + k.user + "," + k.src_device + "," + k.dst_device;
}

std::vector<LogRecord> normalize_stream(std::vector<LogRecord> records) {
    std::stable_sort(records.begin(), records.end(),
                     [](const LogRecord& a, const LogRecord& b) { return a.t < b.t; });
    std::vector<LogRecord> out;
    out.reserve(records.size());
    std::unordered_set<LogRecord, LogRecordHash> seen;
    Timestamp current = -1;
    for (auto& r : records) {
        if (r.t != current) {
            seen.clear();
            current = r.t;
        }
        if (seen.insert(r).second) out.push_back(std::move(r));
    }
    return out;
}

} // namespace lmd
