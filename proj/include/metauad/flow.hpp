#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace metauad {

enum TcpFlag : std::uint8_t {
  kFin = 0x01,
  kSyn = 0x02,
  kRst = 0x04,
  kPsh = 0x08,
  kAck = 0x10,
  kUrg = 0x20,
};

enum class Direction : std::uint8_t { forward, backward };

// Transport 5-tuple. Addresses are stored as 16 bytes; IPv4 occupies the
// first four. Orientation is as-parsed; the flow assembler fixes the
// canonical orientation to the first packet it sees for the pair.
struct FlowKey {
  std::array<std::uint8_t, 16> src_addr{};
  std::array<std::uint8_t, 16> dst_addr{};
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t protocol = 0;
  bool is_v6 = false;

  bool operator==(const FlowKey&) const = default;
  FlowKey reversed() const;
  std::string to_string() const;
};

struct PacketMeta {
  std::uint64_t timestamp_us = 0;
  FlowKey key;
  std::uint32_t header_len = 0;   // network + transport headers, bytes
  std::uint32_t payload_len = 0;  // bytes
  std::uint8_t tcp_flags = 0;     // TcpFlag mask, 0 for UDP
  Direction direction = Direction::forward;
};

struct FlowRecord {
  FlowKey key;  // canonical orientation = first packet of the flow
  std::vector<PacketMeta> packets;
  std::uint64_t start_time_us = 0;
  std::uint64_t end_time_us = 0;
  std::size_t packet_count() const { return packets.size(); }
};

struct CaptureResult {
  std::vector<PacketMeta> packets;  // capture order
  std::size_t skipped = 0;          // non-IP / non-TCP-UDP / fragment frames
  std::uint32_t linktype = 0;
};

// Classic pcap only (magic 0xA1B2C3D4 / 0xD4C3B2A1 and the nanosecond
// variants 0xA1B23C4D / 0x4D3CB2A1; nanosecond stamps are down-converted
// to microseconds). Linktypes: 1 (Ethernet, VLAN tags unwrapped) and
// 101 (raw IP).
CaptureResult parse_capture(const std::string& path);

// Groups time-ordered packets into bidirectional flows. A flow ends on an
// idle gap > idle_timeout_us, on TCP FIN seen in both directions or RST in
// either, or at end of input. Emission order is termination order; flows
// still open at the end flush in first-packet order.
std::vector<FlowRecord> assemble_flows(const std::vector<PacketMeta>& packets,
                                       std::uint64_t idle_timeout_us);

std::string format_ip(const std::array<std::uint8_t, 16>& addr, bool is_v6);

}  // namespace metauad
