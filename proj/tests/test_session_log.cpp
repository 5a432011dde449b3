#include <doctest.h>

#include <fstream>
#include <sstream>

#include "communics/session_log.hpp"
#include "oracles.hpp"

using namespace communics;

namespace {

// Reflected CRC-32 (polynomial 0xEDB88320), bit by bit.
std::uint32_t crc32_bitwise(std::string_view data) {
    std::uint32_t crc = 0xFFFFFFFFu;
    for (unsigned char c : data) {
        crc ^= c;
        for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
    }
    return ~crc;
}

std::uint32_t be32(std::string_view b, std::size_t at) {
    return (std::uint32_t(static_cast<unsigned char>(b[at])) << 24) |
           (std::uint32_t(static_cast<unsigned char>(b[at + 1])) << 16) |
           (std::uint32_t(static_cast<unsigned char>(b[at + 2])) << 8) | std::uint32_t(static_cast<unsigned char>(b[at + 3]));
}

struct Record {
    std::size_t offset;  // of the length field
    std::uint32_t length;
};

std::vector<Record> records(std::string_view bytes) {
    std::vector<Record> out;
    std::size_t at = kLogMagic.size();
    while (at < bytes.size()) {
        out.push_back({at, be32(bytes, at)});
        at += 8 + out.back().length;
    }
    return out;
}

std::uint64_t corrupt_position(const std::string& bytes) {
    try {
        (void)decode_log(bytes);
    } catch (const CorruptLogError& e) {
        return e.position();
    }
    FAIL("log was accepted");
    return 0;
}

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "communics_log_tests";
    std::filesystem::create_directories(dir);
    auto p = dir / name;
    std::error_code ec;
    std::filesystem::permissions(p, std::filesystem::perms::owner_all, ec);
    std::filesystem::remove(p, ec);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

LogHeader header_of(const std::vector<SessionEvent>& log) {
    return log_header_from_json({{"schema_version", kSessionSchemaVersion},
                                 {"library_checksum", log.front().payload["library_checksum"]},
                                 {"config", log.front().payload["config"]}});
}

}  // namespace

TEST_CASE("record framing: big-endian length, CRC-32 of the payload, compact JSON") {
    auto lib = oracle::mini_library();
    const auto log = oracle::fuzz_session(lib, 3, {});
    const auto bytes = encode_log(header_of(log), log);
    CHECK(bytes.substr(0, kLogMagic.size()) == kLogMagic);
    const auto recs = records(bytes);
    REQUIRE(recs.size() == log.size() + 1);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto payload = std::string_view(bytes).substr(recs[i].offset + 8, recs[i].length);
        CHECK(be32(bytes, recs[i].offset + 4) == crc32_bitwise(payload));
        const auto doc = nlohmann::json::parse(payload);
        CHECK(doc.dump() == payload);
        if (i > 0) CHECK(doc["seq"] == log[i - 1].seq);
    }
}

TEST_CASE("encode/decode round trip") {
    auto lib = oracle::mini_library();
    const auto log = oracle::fuzz_session(lib, 4, {});
    const auto header = header_of(log);
    const auto decoded = decode_log(encode_log(header, log));
    CHECK(decoded.header == header);
    REQUIRE(decoded.events.size() == log.size());
    for (std::size_t i = 0; i < log.size(); ++i) CHECK(to_json(decoded.events[i]) == to_json(log[i]));
}

TEST_CASE("corruption is reported with the record position") {
    auto lib = oracle::mini_library();
    const auto log = oracle::fuzz_session(lib, 6, {});
    const auto bytes = encode_log(header_of(log), log);
    const auto recs = records(bytes);

    SUBCASE("bad magic") {
        auto bad = bytes;
        bad[0] = 'X';
        CHECK(corrupt_position(bad) == 0);
    }
    SUBCASE("flipped payload byte") {
        for (std::size_t victim : {std::size_t{1}, std::size_t{7}, recs.size() - 1}) {
            auto bad = bytes;
            bad[recs[victim].offset + 8 + recs[victim].length / 2] ^= 0x01;
            CHECK(corrupt_position(bad) == victim);
        }
    }
    SUBCASE("flipped checksum byte") {
        auto bad = bytes;
        bad[recs[12].offset + 5] ^= 0x40;
        CHECK(corrupt_position(bad) == 12);
    }
    SUBCASE("truncated tail") {
        const auto cut = bytes.substr(0, recs.back().offset + 8 + recs.back().length - 3);
        CHECK(corrupt_position(cut) == recs.size() - 1);
    }
    SUBCASE("seq gap") {
        auto gapped = log;
        gapped.erase(gapped.begin() + 9);
        CHECK(corrupt_position(encode_log(header_of(log), gapped)) == 10);
    }
    SUBCASE("header disagrees with the session") {
        auto h = header_of(log);
        h.library_checksum = "0000000000000000";
        CHECK(corrupt_position(encode_log(h, log)) == 1);
    }
}

TEST_CASE("writer appends in order, flushes each record and seals read-only") {
    auto lib = oracle::mini_library();
    const auto log = oracle::fuzz_session(lib, 8, {});
    const auto path = temp_file("writer.log");
    {
        LogWriter w(path, header_of(log));
        for (std::size_t i = 0; i < 10; ++i) w.append(log[i]);
        // A reader sees a valid prefix while the session runs.
        const auto prefix = decode_log(slurp(path));
        CHECK(prefix.events.size() == 10);
        CHECK_THROWS_AS(w.append(log[11]), Error);
        for (std::size_t i = 10; i < log.size(); ++i) w.append(log[i]);
        w.seal();
        CHECK(w.sealed());
        CHECK_THROWS_AS(w.append(log.back()), Error);
    }
    const auto perms = std::filesystem::status(path).permissions();
    CHECK((perms & std::filesystem::perms::owner_write) == std::filesystem::perms::none);
    CHECK(slurp(path) == encode_log(header_of(log), log));

    auto s = load_and_replay(path, lib);
    CHECK(s.events().size() == log.size());
    CHECK_THROWS_AS(load_and_replay(path, oracle::reference_library()), CorruptLogError);
}

TEST_CASE("reading a missing file is an io error") {
    try {
        (void)read_log("/nonexistent/communics.log");
        FAIL("expected io_error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::io_error);
    }
}
