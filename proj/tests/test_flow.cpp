#include <doctest.h>

#include <cstdint>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "metauad/common.hpp"
#include "metauad/flow.hpp"

using namespace metauad;
using testutil::PcapOptions;
using testutil::TempDir;
using testutil::TestPacket;

namespace {

FlowKey key_of(std::uint8_t host_a, std::uint8_t host_b, std::uint16_t pa, std::uint16_t pb) {
  FlowKey k;
  k.src_addr.fill(0);
  k.dst_addr.fill(0);
  k.src_addr[0] = 10;
  k.src_addr[3] = host_a;
  k.dst_addr[0] = 10;
  k.dst_addr[3] = host_b;
  k.src_port = pa;
  k.dst_port = pb;
  k.protocol = 6;
  k.is_v6 = false;
  return k;
}

PacketMeta packet_at(std::uint64_t t_us, const FlowKey& key, std::uint8_t flags = kAck) {
  PacketMeta p;
  p.timestamp_us = t_us;
  p.key = key;
  p.header_len = 40;
  p.payload_len = 100;
  p.tcp_flags = flags;
  return p;
}

}  // namespace

TEST_CASE("three-packet capture parses to the hand-specified records") {
  TempDir dir("flow");
  std::vector<TestPacket> pkts{
      {1'000'000, true, 40, static_cast<std::uint8_t>(kPsh | kAck)},
      {1'100'000, false, 100, kAck},
      {1'300'000, true, 60, kAck},
  };
  std::string path = testutil::write_pcap(dir, "t.pcap", pkts);

  CaptureResult cap = parse_capture(path);
  CHECK(cap.skipped == 0);
  CHECK(cap.linktype == 1);
  REQUIRE(cap.packets.size() == 3);

  CHECK(cap.packets[0].timestamp_us == 1'000'000);
  CHECK(cap.packets[1].timestamp_us == 1'100'000);
  CHECK(cap.packets[2].timestamp_us == 1'300'000);
  CHECK(cap.packets[0].tcp_flags == (kPsh | kAck));
  CHECK(cap.packets[1].tcp_flags == kAck);
  CHECK(cap.packets[0].payload_len == 40);
  CHECK(cap.packets[1].payload_len == 100);
  CHECK(cap.packets[2].payload_len == 60);
  for (const auto& p : cap.packets) CHECK(p.header_len == 40);  // 20 IPv4 + 20 TCP

  // fwd packets carry the client 5-tuple; the bwd one is mirrored
  CHECK(cap.packets[0].key.src_port == 40000);
  CHECK(cap.packets[0].key.dst_port == 443);
  CHECK(cap.packets[1].key.src_port == 443);
  CHECK(cap.packets[1].key.dst_port == 40000);
  CHECK(cap.packets[1].key == cap.packets[0].key.reversed());
}

TEST_CASE("ARP frames are skipped, not parsed") {
  TempDir dir("flow");
  std::string path = dir.file("arp.pcap");
  write_text_file(path, testutil::pcap_bytes_raw({{5'000'000, testutil::arp_frame()}}));
  CaptureResult cap = parse_capture(path);
  CHECK(cap.packets.empty());
  CHECK(cap.skipped == 1);
}

TEST_CASE("non-first IPv4 fragments are skipped") {
  TempDir dir("flow");
  PcapOptions o;
  TestPacket p{2'000'000, true, 50, kAck};
  // fragment offset 33 (in 8-byte units): transport header unavailable
  std::string frag = testutil::ethernet_wrap(testutil::ipv4_tcp_bytes(p, o, 0x0021), false);
  std::string whole = testutil::ethernet_wrap(testutil::ipv4_tcp_bytes(p, o), false);
  std::string path = dir.file("frag.pcap");
  write_text_file(path, testutil::pcap_bytes_raw({{2'000'000, frag}, {2'000'500, whole}}));

  CaptureResult cap = parse_capture(path);
  CHECK(cap.skipped == 1);
  REQUIRE(cap.packets.size() == 1);
  CHECK(cap.packets[0].timestamp_us == 2'000'500);
}

TEST_CASE("802.1Q VLAN tags are unwrapped") {
  TempDir dir("flow");
  PcapOptions o;
  o.vlan = true;
  std::vector<TestPacket> pkts{{3'000'000, true, 25, kAck}};
  std::string path = testutil::write_pcap(dir, "vlan.pcap", pkts, o);
  CaptureResult cap = parse_capture(path);
  REQUIRE(cap.packets.size() == 1);
  CHECK(cap.packets[0].payload_len == 25);
  CHECK(cap.packets[0].key.dst_port == 443);
}

TEST_CASE("raw-IP linktype 101 parses without a link header") {
  TempDir dir("flow");
  PcapOptions o;
  o.linktype = 101;
  std::vector<TestPacket> pkts{{4'000'000, true, 10, kSyn}};
  std::string path = testutil::write_pcap(dir, "raw.pcap", pkts, o);
  CaptureResult cap = parse_capture(path);
  CHECK(cap.linktype == 101);
  REQUIRE(cap.packets.size() == 1);
  CHECK(cap.packets[0].tcp_flags == kSyn);
}

TEST_CASE("nanosecond captures down-convert to microseconds") {
  TempDir dir("flow");
  PcapOptions o;
  o.magic = 0xA1B23C4D;
  std::vector<TestPacket> pkts{{7'123'456, true, 5, kAck}};
  std::string path = testutil::write_pcap(dir, "ns.pcap", pkts, o);
  CaptureResult cap = parse_capture(path);
  REQUIRE(cap.packets.size() == 1);
  CHECK(cap.packets[0].timestamp_us == 7'123'456);
}

TEST_CASE("bad magic and truncated files are format errors") {
  TempDir dir("flow");

  std::string bad = testutil::pcap_bytes({{1'000'000, true, 4, kAck}});
  bad[0] = 'Z';  // corrupt the magic
  write_text_file(dir.file("bad.pcap"), bad);
  CHECK_THROWS_AS((void)parse_capture(dir.file("bad.pcap")), FormatError);

  std::string good = testutil::pcap_bytes({{1'000'000, true, 4, kAck}});
  write_text_file(dir.file("short_hdr.pcap"), good.substr(0, 10));
  CHECK_THROWS_AS((void)parse_capture(dir.file("short_hdr.pcap")), FormatError);

  write_text_file(dir.file("short_rec.pcap"), good.substr(0, good.size() - 5));
  CHECK_THROWS_AS((void)parse_capture(dir.file("short_rec.pcap")), FormatError);
}

TEST_CASE("same-key packets within the timeout form one flow") {
  FlowKey k = key_of(1, 2, 5000, 80);
  // 10 ms gaps, 120 s timeout
  std::vector<PacketMeta> pkts{packet_at(0, k), packet_at(10'000, k), packet_at(20'000, k)};
  auto flows = assemble_flows(pkts, 120'000'000ULL);
  REQUIRE(flows.size() == 1);
  CHECK(flows[0].packet_count() == 3);
  CHECK(flows[0].start_time_us == 0);
  CHECK(flows[0].end_time_us == 20'000);
}

TEST_CASE("an idle gap beyond the timeout splits the flow") {
  FlowKey k = key_of(1, 2, 5000, 80);
  std::vector<PacketMeta> pkts{packet_at(0, k), packet_at(200'000'000, k)};
  auto flows = assemble_flows(pkts, 120'000'000ULL);
  REQUIRE(flows.size() == 2);
  CHECK(flows[0].packet_count() == 1);
  CHECK(flows[1].packet_count() == 1);
}

TEST_CASE("mirrored keys join one flow oriented by the first packet") {
  FlowKey fwd = key_of(1, 2, 5000, 80);
  std::vector<PacketMeta> pkts{packet_at(0, fwd), packet_at(1'000, fwd.reversed())};
  auto flows = assemble_flows(pkts, 120'000'000ULL);
  REQUIRE(flows.size() == 1);
  REQUIRE(flows[0].packet_count() == 2);
  CHECK(flows[0].key == fwd);
  CHECK(flows[0].packets[0].direction == Direction::forward);
  CHECK(flows[0].packets[1].direction == Direction::backward);
}

TEST_CASE("FIN in both directions closes the flow; the key can reopen") {
  FlowKey k = key_of(3, 4, 1234, 443);
  std::vector<PacketMeta> pkts{
      packet_at(0, k, kAck),
      packet_at(1'000, k, kFin | kAck),             // forward FIN
      packet_at(2'000, k.reversed(), kFin | kAck),  // backward FIN -> closed
      packet_at(3'000, k, kSyn),                    // new flow on the same key
  };
  auto flows = assemble_flows(pkts, 120'000'000ULL);
  REQUIRE(flows.size() == 2);
  CHECK(flows[0].packet_count() == 3);
  CHECK(flows[1].packet_count() == 1);
  CHECK(flows[1].packets[0].tcp_flags == kSyn);
}

TEST_CASE("a single-direction FIN does not close the flow") {
  FlowKey k = key_of(3, 4, 1234, 443);
  std::vector<PacketMeta> pkts{
      packet_at(0, k, kAck),
      packet_at(1'000, k, kFin | kAck),
      packet_at(2'000, k, kAck),
  };
  auto flows = assemble_flows(pkts, 120'000'000ULL);
  REQUIRE(flows.size() == 1);
  CHECK(flows[0].packet_count() == 3);
}

TEST_CASE("RST in either direction closes immediately") {
  FlowKey k = key_of(5, 6, 999, 25);
  std::vector<PacketMeta> pkts{
      packet_at(0, k, kAck),
      packet_at(500, k.reversed(), kRst),
      packet_at(1'000, k, kAck),
  };
  auto flows = assemble_flows(pkts, 120'000'000ULL);
  REQUIRE(flows.size() == 2);
  CHECK(flows[0].packet_count() == 2);
  CHECK(flows[1].packet_count() == 1);
}

TEST_CASE("assembly preconditions: ordering and timeout") {
  FlowKey k = key_of(1, 2, 5000, 80);
  std::vector<PacketMeta> unordered{packet_at(10'000, k), packet_at(0, k)};
  CHECK_THROWS_AS((void)assemble_flows(unordered, 120'000'000ULL), PreconditionError);
  CHECK_THROWS_AS((void)assemble_flows({packet_at(0, k)}, 0), PreconditionError);
}

TEST_CASE("conservation: every accepted packet lands in exactly one flow") {
  Rng rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<PacketMeta> pkts;
    std::uint64_t t = 0;
    for (int i = 0; i < 400; ++i) {
      t += rng.index(3'000'000);  // gaps up to 3 s
      FlowKey k = key_of(static_cast<std::uint8_t>(1 + rng.index(3)),
                         static_cast<std::uint8_t>(10 + rng.index(3)),
                         static_cast<std::uint16_t>(1000 + rng.index(4)), 443);
      std::uint8_t flags = kAck;
      double roll = rng.uniform01();
      if (roll < 0.05) flags |= kFin;
      if (roll > 0.97) flags |= kRst;
      PacketMeta p = packet_at(t, rng.uniform01() < 0.5 ? k : k.reversed(), flags);
      pkts.push_back(p);
    }
    auto flows = assemble_flows(pkts, 1'000'000ULL);  // 1 s timeout forces splits
    std::size_t total = 0;
    for (const auto& f : flows) {
      total += f.packet_count();
      // direction split: fwd + bwd = packet count, orientation = first packet
      std::size_t fwd = 0, bwd = 0;
      for (const auto& p : f.packets) {
        (p.direction == Direction::forward ? fwd : bwd)++;
      }
      CHECK(fwd + bwd == f.packet_count());
      CHECK(f.packets[0].direction == Direction::forward);
    }
    CHECK(total == pkts.size());
  }
}

TEST_CASE("flow key formats as address:port pairs") {
  FlowKey k = key_of(1, 2, 5000, 80);
  CHECK(k.to_string() == "10.0.0.1:5000->10.0.0.2:80/6");
}
