#include <doctest.h>

#include <algorithm>

#include "lmd/binary_io.hpp"
#include "lmd/error.hpp"
#include "lmd/log_ingest.hpp"
#include "lmd/random.hpp"
#include "support.hpp"

using namespace lmd;

TEST_CASE("LANL row parses into a login record") {
    const auto r = parse_record("1,U32@DOM1,U32@DOM1,C815,C625,Kerberos,Network,LogOn,Success", LogFormat::Lanl);
    CHECK(r.t == 1);
    CHECK(r.src_user == "U32@DOM1");
    CHECK(r.dst_user == "U32@DOM1");
    CHECK(r.src_device == "C815");
    CHECK(r.dst_device == "C625");
    CHECK(r.auth_type == AuthType::Kerberos);
    CHECK(r.logon_type == LogonType::Network);
    CHECK(r.orientation == Orientation::LogOn);
    CHECK(r.outcome == Outcome::Success);
    CHECK(r.interaction == Interaction::Login);
    CHECK_FALSE(r.object.has_value());
}

TEST_CASE("LANL row with a missing field is malformed") {
    CHECK_THROWS_AS(parse_record("1,U32@DOM1,U32@DOM1,C815,C625,Kerberos,Network,LogOn", LogFormat::Lanl),
                    MalformedRecord);
    CHECK_THROWS_AS(parse_record("x,U1,U1,C1,C2,?,?,LogOn,Success", LogFormat::Lanl), MalformedRecord);
    CHECK_THROWS_AS(parse_record("3,,U1,C1,C2,?,?,LogOn,Success", LogFormat::Lanl), MalformedRecord);
}

TEST_CASE("unknown category markers fall back to Unknown") {
    const auto r = parse_record("5,U1@D,U1@D,C1,C2,?,?,LogOn,Success", LogFormat::Lanl);
    CHECK(r.auth_type == AuthType::Unknown);
    CHECK(r.logon_type == LogonType::Unknown);
    CHECK(r.orientation == Orientation::LogOn);
}

TEST_CASE("CRLF line endings are accepted") {
    const auto r = parse_record("5,U1@D,U1@D,C1,C2,NTLM,Network,LogOn,Fail\r", LogFormat::Lanl);
    CHECK(r.outcome == Outcome::Failure);
    CHECK(r.auth_type == AuthType::NTLM);
}

TEST_CASE("CERT rows map to login, connection and access") {
    const auto logon = parse_record("{X1},01/02/2010 07:12:30,DTAA/ACM2278,PC-6377,Logon", LogFormat::Cert);
    CHECK(logon.interaction == Interaction::Login);
    CHECK(logon.src_device == "PC-6377");
    CHECK(logon.dst_device == "PC-6377");
    CHECK(logon.orientation == Orientation::LogOn);
    const auto dev = parse_record("{X2},01/02/2010 07:21:06,DTAA/ACM2278,PC-6377,Connect", LogFormat::Cert);
    CHECK(dev.interaction == Interaction::Connection);
    const auto file = parse_record("{X3},01/02/2010 07:22:42,DTAA/ACM2278,PC-6377,R:\\a.doc,D0-CF-11", LogFormat::Cert);
    CHECK(file.interaction == Interaction::Access);
    REQUIRE(file.object.has_value());
    CHECK(*file.object == "R:\\a.doc");
    CHECK(logon.t + 516 == dev.t);
}

TEST_CASE("generic JSON records round-trip through the canonical form") {
    LogRecord r;
    r.t = 42;
    r.src_user = "U1";
    r.dst_user = "U1";
    r.src_device = "C1";
    r.dst_device = "C1";
    r.object = "F7";
    r.interaction = Interaction::Creation;
    r.outcome = Outcome::Success;
    CHECK(parse_record(to_generic_json(r), LogFormat::Generic) == r);
    CHECK_THROWS_AS(parse_record(R"({"t":1,"interaction":"access","src_user":"U","dst_device":"C"})",
                                 LogFormat::Generic),
                    MalformedRecord);
    CHECK_THROWS_AS(parse_record("not json", LogFormat::Generic), MalformedRecord);
}

TEST_CASE("LANL writer and parser agree") {
    const auto r = parse_record("9,U2@DOM1,U3@DOM1,C4,C5,Negotiate,Batch,TGS,Success", LogFormat::Lanl);
    CHECK(parse_record(to_lanl_line(r), LogFormat::Lanl) == r);
}

TEST_CASE("malformed lines are counted and skipped") {
    const std::string text = "1,U1,U1,C1,C2,?,?,LogOn,Success\nbroken\n2,U1,U1,C1,C2,?,?,LogOn,Success\n";
    const auto lines = split_lines(text);
    REQUIRE(lines.size() == 3);
    WorkerPool pool(2);
    const auto res = parse_lines(lines, LogFormat::Lanl, pool);
    CHECK(res.records.size() == 2);
    CHECK(res.stats.malformed == 1);
    CHECK(res.stats.parsed == 2);
    CHECK(res.records[0].t == 1);
    CHECK(res.records[1].t == 2);
}

TEST_CASE("red-team labels use set semantics") {
    testing::TempDir dir("labels");
    write_file_text(dir.file("one"), "151036,U748@DOM1,C17693,C305\n");
    CHECK(load_labels(dir.file("one"), LogFormat::Lanl).labels.size() == 1);
    write_file_text(dir.file("two"), "151036,U748@DOM1,C17693,C305\n151036,U748@DOM1,C17693,C305\n");
    CHECK(load_labels(dir.file("two"), LogFormat::Lanl).labels.size() == 1);
    write_file_text(dir.file("empty"), "");
    const auto empty = load_labels(dir.file("empty"), LogFormat::Lanl);
    CHECK(empty.labels.size() == 0);
    CHECK(empty.stats.malformed == 0);
}

TEST_CASE("normalize_stream sorts stably and drops exact duplicates") {
    LogRecord a;
    a.t = 5;
    a.src_user = "U";
    a.src_device = a.dst_device = "C";
    LogRecord b = a;
    b.t = 1;
    auto out = normalize_stream({a, b});
    REQUIRE(out.size() == 2);
    CHECK(out[0].t == 1);
    CHECK(out[1].t == 5);
    CHECK(normalize_stream({a, a}).size() == 1);
}

TEST_CASE("normalize_stream matches a full sort on 10000 shuffled records") {
    Rng rng(3);
    std::vector<LogRecord> recs;
    for (int i = 0; i < 10000; ++i) {
        LogRecord r;
        r.t = static_cast<Timestamp>(rng.below(500));
        r.src_user = "U" + std::to_string(rng.below(30));
        r.src_device = "C" + std::to_string(rng.below(20));
        r.dst_device = "C" + std::to_string(rng.below(20));
        recs.push_back(r);
    }
    // Oracle: keep first occurrences, then stable sort by time.
    std::vector<LogRecord> oracle;
    for (const auto& r : recs) {
        if (std::find(oracle.begin(), oracle.end(), r) == oracle.end()) oracle.push_back(r);
    }
    std::stable_sort(oracle.begin(), oracle.end(), [](const LogRecord& x, const LogRecord& y) { return x.t < y.t; });
    CHECK(normalize_stream(recs) == oracle);
}
