#pragma once

// Shared fixtures for the test suites: a byte-level classic-pcap writer
// (Ethernet/IPv4/TCP frames), scoped temp directories, and small table
// builders.

#include <unistd.h>

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "metauad/common.hpp"
#include "metauad/csv.hpp"

namespace testutil {

// ---------------------------------------------------------------- temp dirs

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("metauad_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// -------------------------------------------------------------- pcap writer

// One TCP packet of a single bidirectional conversation. `fwd` packets go
// client->server; timestamps are absolute microseconds.
struct TestPacket {
  std::uint64_t t_us = 0;
  bool fwd = true;
  std::uint16_t payload = 0;
  std::uint8_t flags = 0x10;  // ACK
};

struct PcapOptions {
  std::uint32_t magic = 0xA1B2C3D4;  // microsecond, native little-endian
  std::uint32_t linktype = 1;        // Ethernet; 101 = raw IP
  bool vlan = false;                 // insert one 802.1Q tag per frame
  std::array<std::uint8_t, 4> src_ip{10, 0, 0, 1};
  std::array<std::uint8_t, 4> dst_ip{10, 0, 0, 2};
  std::uint16_t src_port = 40000;
  std::uint16_t dst_port = 443;
};

inline void put_u16le(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xFF));
  b.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u32le(std::string& b, std::uint32_t v) {
  b.push_back(static_cast<char>(v & 0xFF));
  b.push_back(static_cast<char>((v >> 8) & 0xFF));
  b.push_back(static_cast<char>((v >> 16) & 0xFF));
  b.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline void put_u16be(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>((v >> 8) & 0xFF));
  b.push_back(static_cast<char>(v & 0xFF));
}

// IPv4+TCP packet body (no link layer). frag_field is the raw IPv4
// flags/fragment-offset field; 0x4000 = don't-fragment, offset 0.
inline std::string ipv4_tcp_bytes(const TestPacket& p, const PcapOptions& o,
                                  std::uint16_t frag_field = 0x4000) {
  std::string f;
  f.push_back(static_cast<char>(0x45));  // version 4, ihl 5
  f.push_back(0);                        // tos
  put_u16be(f, static_cast<std::uint16_t>(20 + 20 + p.payload));
  put_u16be(f, 0x1234);  // identification
  put_u16be(f, frag_field);
  f.push_back(static_cast<char>(64));  // ttl
  f.push_back(static_cast<char>(6));   // protocol TCP
  put_u16be(f, 0);                     // header checksum (not validated)
  const auto& sip = p.fwd ? o.src_ip : o.dst_ip;
  const auto& dip = p.fwd ? o.dst_ip : o.src_ip;
  f.append(reinterpret_cast<const char*>(sip.data()), 4);
  f.append(reinterpret_cast<const char*>(dip.data()), 4);
  put_u16be(f, p.fwd ? o.src_port : o.dst_port);
  put_u16be(f, p.fwd ? o.dst_port : o.src_port);
  f.append(8, '\0');                     // seq + ack
  f.push_back(static_cast<char>(0x50));  // data offset 5 words
  f.push_back(static_cast<char>(p.flags));
  put_u16be(f, 65535);  // window
  put_u16be(f, 0);      // checksum
  put_u16be(f, 0);      // urgent pointer
  f.append(p.payload, 'x');
  return f;
}

inline std::string ethernet_wrap(const std::string& ip_bytes, bool vlan,
                                 std::uint16_t ethertype = 0x0800) {
  std::string f;
  f.append(6, static_cast<char>(0x02));  // dst MAC
  f.append(6, static_cast<char>(0x04));  // src MAC
  if (vlan) {
    put_u16be(f, 0x8100);
    put_u16be(f, 0x0001);  // priority/VID
  }
  put_u16be(f, ethertype);
  f += ip_bytes;
  return f;
}

// A well-formed Ethernet ARP request (non-IP; parsers must skip it).
inline std::string arp_frame() {
  std::string body;
  put_u16be(body, 1);       // hardware type: Ethernet
  put_u16be(body, 0x0800);  // protocol type: IPv4
  body.push_back(6);
  body.push_back(4);
  put_u16be(body, 1);  // opcode: request
  body.append(20, '\0');
  return ethernet_wrap(body, false, 0x0806);
}

// Serializes pre-built frames into a classic pcap byte string.
inline std::string pcap_bytes_raw(const std::vector<std::pair<std::uint64_t, std::string>>& frames,
                                  const PcapOptions& o = {}) {
  std::string b;
  put_u32le(b, o.magic);
  put_u16le(b, 2);
  put_u16le(b, 4);
  put_u32le(b, 0);      // thiszone
  put_u32le(b, 0);      // sigfigs
  put_u32le(b, 65535);  // snaplen
  put_u32le(b, o.linktype);
  const bool nanos = (o.magic == 0xA1B23C4D);
  for (const auto& [t_us, frame] : frames) {
    put_u32le(b, static_cast<std::uint32_t>(t_us / 1000000ULL));
    const std::uint64_t sub = t_us % 1000000ULL;
    put_u32le(b, static_cast<std::uint32_t>(nanos ? sub * 1000ULL : sub));
    put_u32le(b, static_cast<std::uint32_t>(frame.size()));
    put_u32le(b, static_cast<std::uint32_t>(frame.size()));
    b += frame;
  }
  return b;
}

inline std::string pcap_bytes(const std::vector<TestPacket>& packets, const PcapOptions& o = {}) {
  std::vector<std::pair<std::uint64_t, std::string>> frames;
  frames.reserve(packets.size());
  for (const TestPacket& p : packets) {
    std::string ip = ipv4_tcp_bytes(p, o);
    frames.emplace_back(p.t_us, o.linktype == 101 ? ip : ethernet_wrap(ip, o.vlan));
  }
  return pcap_bytes_raw(frames, o);
}

inline std::string write_pcap(const TempDir& dir, const std::string& name,
                              const std::vector<TestPacket>& packets, const PcapOptions& o = {}) {
  std::string path = dir.file(name);
  metauad::write_text_file(path, pcap_bytes(packets, o));
  return path;
}

// ------------------------------------------------------------ table builders

inline metauad::CsvTable make_table(std::vector<std::string> ids,
                                    std::vector<std::vector<double>> rows,
                                    std::vector<std::string> labels = {}) {
  metauad::CsvTable t;
  t.feature_ids = std::move(ids);
  t.rows = std::move(rows);
  t.labels = std::move(labels);
  t.has_labels = !t.labels.empty();
  return t;
}

}  // namespace testutil
