#include "doctest.h"
#include "support.hpp"

using namespace peer_sentinel;
using namespace peer_sentinel::levin;
using testing_support::Rng;

namespace {

std::vector<std::uint8_t> bytes(std::initializer_list<int> v) {
  std::vector<std::uint8_t> out;
  for (int b : v) out.push_back(static_cast<std::uint8_t>(b));
  return out;
}

ErrorKind error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const CodecError& e) {
    return e.kind();
  }
  FAIL("expected a CodecError");
  return ErrorKind::UnsupportedValue;
}

}  // namespace

TEST_CASE("ping request header is laid out little-endian") {
  const auto wire = encode_frame(LevinFrame::request(command::kPing, {}));
  const auto expected = bytes({0x01, 0x21, 0x01, 0x01, 0x01, 0x01, 0x01, 0x01,  // signature
                               0, 0, 0, 0, 0, 0, 0, 0,                          // payload size
                               1,                                               // expect response
                               0xEB, 0x03, 0, 0,                                // command 1003
                               0, 0, 0, 0,                                      // return code
                               1, 0, 0, 0,                                      // request flag
                               1, 0, 0, 0});                                    // version
  CHECK(wire == expected);

  const auto d = decode_frame(wire);
  CHECK(d.consumed == kHeaderSize);
  CHECK(d.frame.command == command::kPing);
  CHECK(d.frame.payload_size == 0);
  CHECK(kind_from_flags(d.frame.flags) == Kind::Request);
}

TEST_CASE("frame errors") {
  auto wire = encode_frame(LevinFrame::request(command::kPing, {}));

  SUBCASE("flipped signature octet") {
    wire[0] ^= 0xFF;
    CHECK(error_of([&] { decode_frame(wire); }) == ErrorKind::MalformedSignature);
  }
  SUBCASE("short header reports the missing octets") {
    std::vector<std::uint8_t> head(wire.begin(), wire.begin() + 20);
    try {
      decode_frame(head);
      FAIL("no error");
    } catch (const CodecError& e) {
      CHECK(e.kind() == ErrorKind::Incomplete);
      CHECK(e.needed() == 13);
    }
  }
  SUBCASE("declared size above the cap") {
    DecodeLimits tight;
    tight.max_payload = 16;
    auto big = encode_frame(LevinFrame::request(command::kPing, std::vector<std::uint8_t>(17, 0)));
    CHECK(error_of([&] { decode_frame(big, tight); }) == ErrorKind::OversizedPayload);
  }
  SUBCASE("flag bits") {
    CHECK(error_of([] { kind_from_flags(0); }) == ErrorKind::InvalidFlags);
    CHECK(error_of([] { kind_from_flags(3); }) == ErrorKind::InvalidFlags);
    CHECK(kind_from_flags(kPacketResponse) == Kind::Response);
  }
}

TEST_CASE("ten-octet payload makes a 43-octet frame") {
  const auto wire = encode_frame(LevinFrame::response(command::kTimedSync, std::vector<std::uint8_t>(10, 0xAB)));
  CHECK(wire.size() == 43);
  CHECK(decode_frame(wire).frame.payload.size() == 10);
}

TEST_CASE("storage encoding matches hand-assembled bytes") {
  SUBCASE("single u64 field") {
    EpeeSection root;
    root.entries.emplace_back("height", std::uint64_t{0x0102030405060708ULL});
    const auto expected = bytes({0x01, 0x11, 0x01, 0x01, 0x01, 0x01, 0x02, 0x01, 0x01,  // storage header
                                 0x04,                                                  // varint count 1
                                 0x06, 'h', 'e', 'i', 'g', 'h', 't',                    // name
                                 0x05,                                                  // u64 tag
                                 0x08, 0x07, 0x06, 0x05, 0x04, 0x03, 0x02, 0x01});
    const auto wire = encode_storage(root);
    CHECK(wire.size() - kStorageHeaderSize == 17);
    CHECK(wire == expected);
    CHECK(decode_storage(wire) == root);
  }
  SUBCASE("empty message") {
    const auto wire = encode_storage({});
    CHECK(wire.size() == 10);
    CHECK(decode_storage(wire).entries.empty());
  }
  SUBCASE("varint size boundaries") {
    for (std::size_t len : {63u, 64u, 16383u, 16384u}) {
      EpeeSection root;
      root.entries.emplace_back("s", epee_string(std::string(len, 'x')));
      const auto wire = encode_storage(root);
      const std::size_t prefix = len < 64 ? 1 : len < 16384 ? 2 : 4;
      CHECK(wire.size() == kStorageHeaderSize + 1 + 2 + 1 + prefix + len);
      CHECK(decode_storage(wire) == root);
    }
  }
}

TEST_CASE("storage errors") {
  SUBCASE("truncated body") {
    EpeeSection root;
    root.entries.emplace_back("height", std::uint64_t{5});
    auto wire = encode_storage(root);
    wire.resize(wire.size() - 3);
    CHECK(error_of([&] { decode_storage(wire); }) == ErrorKind::MalformedStorage);
  }
  SUBCASE("nesting beyond the depth limit") {
    EpeeSection inner;
    inner.entries.emplace_back("leaf", std::uint8_t{1});
    for (int i = 0; i < 20; ++i) {
      EpeeSection outer;
      outer.entries.emplace_back("n", inner);
      inner = outer;
    }
    const auto wire = encode_storage(inner);
    CHECK(error_of([&] { decode_storage(wire); }) == ErrorKind::DepthExceeded);
    DecodeLimits loose;
    loose.max_depth = 64;
    CHECK(decode_storage(wire, loose) == inner);
  }
  SUBCASE("bad storage signature") {
    auto wire = encode_storage({});
    wire[0] = 0x02;
    CHECK(error_of([&] { decode_storage(wire); }) == ErrorKind::MalformedStorage);
  }
}

TEST_CASE("payload decoding") {
  SUBCASE("empty ping request has no fields") {
    ParsedMessage m{command::kPing, Kind::Request, {}};
    const auto frame = frame_message(m);
    CHECK(decode_payload(frame).fields.empty());
  }
  SUBCASE("handshake request keeps support flags path") {
    ParsedMessage m{command::kHandshake, Kind::Request, {}};
    m.fields["node_data.peer_id"] = std::uint64_t{42};
    m.fields["node_data.support_flags"] = std::uint32_t{1};
    m.fields["payload_data.current_height"] = std::uint64_t{100};
    const auto back = decode_payload(frame_message(m));
    CHECK(back.fields.count("node_data.support_flags") == 1);
    CHECK(back == m);
  }
  SUBCASE("250-entry peer list round-trips") {
    EpeeArray list;
    list.element = EpeeType::Section;
    for (std::uint32_t i = 0; i < 250; ++i) {
      EpeeSection addr;
      addr.entries.emplace_back("m_ip", std::uint32_t{0x0A000000u + i});
      addr.entries.emplace_back("m_port", std::uint16_t{18080});
      EpeeSection entry;
      entry.entries.emplace_back("adr", addr);
      entry.entries.emplace_back("id", std::uint64_t{i + 1});
      list.items.emplace_back(entry);
    }
    ParsedMessage m{command::kTimedSync, Kind::Response, {}};
    m.fields[kPeerListPath] = list;
    const auto back = decode_payload(frame_message(m));
    REQUIRE(back.fields.count(kPeerListPath) == 1);
    CHECK(back.fields.at(kPeerListPath).get_if<EpeeArray>()->items.size() == 250);
    CHECK(back == m);
  }
  SUBCASE("unknown command") {
    ParsedMessage m{4242, Kind::Request, {}};
    m.fields["x"] = std::uint8_t{1};
    const auto frame = frame_message(m);
    CHECK(error_of([&] { decode_payload(frame); }) == ErrorKind::UnknownCommand);
    CHECK(decode_payload_any(frame).fields.count("x") == 1);
  }
}

TEST_CASE("concatenated frames decode one by one") {
  std::vector<std::uint8_t> stream;
  for (int i = 0; i < 5; ++i) {
    const auto f = encode_frame(LevinFrame::request(command::kPing, {}));
    stream.insert(stream.end(), f.begin(), f.end());
  }
  std::size_t offset = 0, frames = 0;
  while (offset < stream.size()) {
    const auto d = decode_frame(std::span<const std::uint8_t>(stream).subspan(offset));
    offset += d.consumed;
    ++frames;
  }
  CHECK(frames == 5);
  CHECK(offset == stream.size());
}

TEST_CASE("random frames and storage round-trip") {
  Rng rng(17);
  for (int i = 0; i < 500; ++i) {
    const auto f = testing_support::random_frame(rng);
    const auto d = decode_frame(encode_frame(f));
    CHECK(d.frame == f);
    const auto s = testing_support::random_section(rng, 4);
    CHECK(decode_storage(encode_storage(s)) == s);
    CHECK(unflatten(flatten(s)) == unflatten(flatten(unflatten(flatten(s)))));
  }
}

TEST_CASE("command names") {
  CHECK(command_name(command::kTimedSync) == "timed_sync");
  CHECK(command_from_name("ping") == command::kPing);
  CHECK(command_name(9999) == "unknown");
  CHECK(is_base_command(command::kSupportFlags));
  CHECK_FALSE(is_base_command(command::kNewBlock));
  CHECK(is_known_command(command::kNewBlock));
}
