#include "metauad/flow.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <unordered_map>

#include "metauad/common.hpp"

namespace metauad {

namespace {

constexpr std::uint32_t kMagicUsec = 0xA1B2C3D4;
constexpr std::uint32_t kMagicUsecSwapped = 0xD4C3B2A1;
constexpr std::uint32_t kMagicNsec = 0xA1B23C4D;
constexpr std::uint32_t kMagicNsecSwapped = 0x4D3CB2A1;

constexpr std::uint32_t kLinkEthernet = 1;
constexpr std::uint32_t kLinkRawIp = 101;

std::uint32_t swap32(std::uint32_t v) {
  return ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
}

std::uint16_t be16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

struct Reader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;
  bool swapped = false;

  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, data + pos, 4);
    pos += 4;
    return swapped ? swap32(v) : v;
  }
  std::uint16_t u16() {
    std::uint16_t v;
    std::memcpy(&v, data + pos, 2);
    pos += 2;
    if (swapped) v = static_cast<std::uint16_t>((v >> 8) | (v << 8));
    return v;
  }
};

// Returns false when the frame is not an IPv4/IPv6 TCP or UDP packet we
// can take a 5-tuple from (counted as skipped by the caller).
bool parse_ip_packet(const std::uint8_t* p, std::size_t len, PacketMeta& out) {
  if (len < 1) return false;
  std::uint8_t version = p[0] >> 4;
  std::size_t net_hlen = 0;
  std::uint8_t proto = 0;
  std::size_t transport_avail = 0;
  std::uint32_t ip_payload = 0;  // bytes after the network header per length fields

  if (version == 4) {
    if (len < 20) return false;
    std::size_t ihl = static_cast<std::size_t>(p[0] & 0x0F) * 4;
    if (ihl < 20 || len < ihl) return false;
    std::uint16_t total_len = be16(p + 2);
    std::uint16_t frag = be16(p + 6);
    if ((frag & 0x1FFF) != 0) return false;  // non-first fragment: no ports
    proto = p[9];
    if (total_len < ihl) return false;
    net_hlen = ihl;
    ip_payload = static_cast<std::uint32_t>(total_len - ihl);
    transport_avail = len - ihl;
    out.key.is_v6 = false;
    out.key.src_addr.fill(0);
    out.key.dst_addr.fill(0);
    std::memcpy(out.key.src_addr.data(), p + 12, 4);
    std::memcpy(out.key.dst_addr.data(), p + 16, 4);
  } else if (version == 6) {
    if (len < 40) return false;
    std::uint16_t payload_len = be16(p + 4);
    std::uint8_t next = p[6];
    std::memcpy(out.key.src_addr.data(), p + 8, 16);
    std::memcpy(out.key.dst_addr.data(), p + 24, 16);
    out.key.is_v6 = true;
    std::size_t off = 40;
    std::size_t ext_total = 0;
    // walk the common extension header chain
    while (true) {
      if (next == 6 || next == 17) break;
      if (next == 44) {  // fragment header
        if (len < off + 8) return false;
        std::uint16_t frag_off = static_cast<std::uint16_t>(be16(p + off + 2) >> 3);
        if (frag_off != 0) return false;
        next = p[off];
        off += 8;
        ext_total += 8;
      } else if (next == 0 || next == 43 || next == 60) {
        if (len < off + 8) return false;
        std::size_t ext_len = (static_cast<std::size_t>(p[off + 1]) + 1) * 8;
        next = p[off];
        off += ext_len;
        ext_total += ext_len;
        if (len < off) return false;
      } else if (next == 51) {  // authentication header: length in 4-byte units
        if (len < off + 8) return false;
        std::size_t ext_len = (static_cast<std::size_t>(p[off + 1]) + 2) * 4;
        next = p[off];
        off += ext_len;
        ext_total += ext_len;
        if (len < off) return false;
      } else {
        return false;
      }
    }
    proto = next;
    net_hlen = 40 + ext_total;
    if (payload_len < ext_total) return false;
    ip_payload = static_cast<std::uint32_t>(payload_len - ext_total);
    transport_avail = len - net_hlen;
  } else {
    return false;
  }

  const std::uint8_t* t = p + net_hlen;
  std::size_t t_hlen = 0;
  out.tcp_flags = 0;
  if (proto == 6) {
    if (transport_avail < 20) return false;
    t_hlen = static_cast<std::size_t>(t[12] >> 4) * 4;
    if (t_hlen < 20 || transport_avail < t_hlen) return false;
    out.tcp_flags = t[13] & (kFin | kSyn | kRst | kPsh | kAck | kUrg);
  } else if (proto == 17) {
    if (transport_avail < 8) return false;
    t_hlen = 8;
  } else {
    return false;
  }

  out.key.src_port = be16(t + 0);
  out.key.dst_port = be16(t + 2);
  out.key.protocol = proto;
  out.header_len = static_cast<std::uint32_t>(net_hlen + t_hlen);
  out.payload_len = ip_payload >= t_hlen ? static_cast<std::uint32_t>(ip_payload - t_hlen) : 0;
  return true;
}

}  // namespace

FlowKey FlowKey::reversed() const {
  FlowKey r = *this;
  std::swap(r.src_addr, r.dst_addr);
  std::swap(r.src_port, r.dst_port);
  return r;
}

std::string format_ip(const std::array<std::uint8_t, 16>& addr, bool is_v6) {
  char buf[64];
  if (!is_v6) {
    std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", addr[0], addr[1], addr[2], addr[3]);
  } else {
    std::snprintf(buf, sizeof(buf),
                  "%02x%02x:%02x%02x:%02x%02x:%02x%02x:%02x%02x:%02x%02x:%02x%02x:%02x%02x",
                  addr[0], addr[1], addr[2], addr[3], addr[4], addr[5], addr[6], addr[7], addr[8],
                  addr[9], addr[10], addr[11], addr[12], addr[13], addr[14], addr[15]);
  }
  return buf;
}

std::string FlowKey::to_string() const {
  return format_ip(src_addr, is_v6) + ":" + std::to_string(src_port) + "->" +
         format_ip(dst_addr, is_v6) + ":" + std::to_string(dst_port) + "/" +
         std::to_string(protocol);
}

CaptureResult parse_capture(const std::string& path) {
  std::string bytes = read_text_file(path);
  Reader rd{reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()};

  if (rd.size < 24) throw FormatError(path + ": truncated pcap global header");
  std::uint32_t magic;
  std::memcpy(&magic, rd.data, 4);
  rd.pos = 4;

  bool nanos = false;
  if (magic == kMagicUsec) {
  } else if (magic == kMagicUsecSwapped) {
    rd.swapped = true;
  } else if (magic == kMagicNsec) {
    nanos = true;
  } else if (magic == kMagicNsecSwapped) {
    rd.swapped = true;
    nanos = true;
  } else {
    char hex[16];
    std::snprintf(hex, sizeof(hex), "0x%08X", magic);
    throw FormatError(path + ": not a classic pcap file (magic " + hex + ")");
  }

  rd.u16();  // version major
  rd.u16();  // version minor
  rd.u32();  // thiszone
  rd.u32();  // sigfigs
  rd.u32();  // snaplen
  std::uint32_t linktype = rd.u32();
  if (linktype != kLinkEthernet && linktype != kLinkRawIp) {
    throw FormatError(path + ": unsupported linktype " + std::to_string(linktype));
  }

  CaptureResult result;
  result.linktype = linktype;

  while (rd.pos < rd.size) {
    std::size_t record_off = rd.pos;
    if (rd.size - rd.pos < 16) {
      throw FormatError(path + ": truncated record header at byte offset " +
                        std::to_string(record_off));
    }
    std::uint32_t ts_sec = rd.u32();
    std::uint32_t ts_sub = rd.u32();
    std::uint32_t incl_len = rd.u32();
    rd.u32();  // orig_len
    if (rd.size - rd.pos < incl_len) {
      throw FormatError(path + ": truncated record data at byte offset " +
                        std::to_string(record_off));
    }
    const std::uint8_t* frame = rd.data + rd.pos;
    rd.pos += incl_len;

    PacketMeta pkt;
    pkt.timestamp_us = static_cast<std::uint64_t>(ts_sec) * 1000000ULL +
                       (nanos ? ts_sub / 1000ULL : ts_sub);

    const std::uint8_t* ip = frame;
    std::size_t ip_len = incl_len;
    if (linktype == kLinkEthernet) {
      if (incl_len < 14) {
        ++result.skipped;
        continue;
      }
      std::uint16_t ethertype = be16(frame + 12);
      std::size_t off = 14;
      while ((ethertype == 0x8100 || ethertype == 0x88A8) && incl_len >= off + 4) {
        ethertype = be16(frame + off + 2);
        off += 4;
      }
      if (ethertype != 0x0800 && ethertype != 0x86DD) {
        ++result.skipped;
        continue;
      }
      ip = frame + off;
      ip_len = incl_len - off;
    }

    if (parse_ip_packet(ip, ip_len, pkt)) {
      result.packets.push_back(pkt);
    } else {
      ++result.skipped;
    }
  }
  return result;
}

namespace {

// Orientation-free key for the open-flow table.
struct SymKey {
  std::array<std::uint8_t, 37> bytes{};

  bool operator==(const SymKey&) const = default;
};

struct SymKeyHash {
  std::size_t operator()(const SymKey& k) const {
    return static_cast<std::size_t>(fnv1a64(k.bytes.data(), k.bytes.size()));
  }
};

SymKey symmetric_key(const FlowKey& k) {
  std::array<std::uint8_t, 18> a{};
  std::array<std::uint8_t, 18> b{};
  std::memcpy(a.data(), k.src_addr.data(), 16);
  a[16] = static_cast<std::uint8_t>(k.src_port >> 8);
  a[17] = static_cast<std::uint8_t>(k.src_port & 0xFF);
  std::memcpy(b.data(), k.dst_addr.data(), 16);
  b[16] = static_cast<std::uint8_t>(k.dst_port >> 8);
  b[17] = static_cast<std::uint8_t>(k.dst_port & 0xFF);
  SymKey s;
  if (b < a) std::swap(a, b);
  std::memcpy(s.bytes.data(), a.data(), 18);
  std::memcpy(s.bytes.data() + 18, b.data(), 18);
  s.bytes[36] = k.protocol;
  return s;
}

struct OpenFlow {
  FlowKey canon;
  std::vector<PacketMeta> packets;
  std::uint64_t last_ts = 0;
  bool fin_fwd = false;
  bool fin_bwd = false;
  std::uint64_t insert_seq = 0;
};

}  // namespace

std::vector<FlowRecord> assemble_flows(const std::vector<PacketMeta>& packets,
                                       std::uint64_t idle_timeout_us) {
  if (idle_timeout_us == 0) throw PreconditionError("idle_timeout must be > 0");

  std::unordered_map<SymKey, OpenFlow, SymKeyHash> open;
  std::vector<FlowRecord> out;
  std::uint64_t seq = 0;

  auto close_flow = [&](OpenFlow&& f) {
    FlowRecord rec;
    rec.key = f.canon;
    rec.start_time_us = f.packets.front().timestamp_us;
    rec.end_time_us = f.packets.back().timestamp_us;
    rec.packets = std::move(f.packets);
    out.push_back(std::move(rec));
  };

  std::uint64_t prev_ts = 0;
  for (std::size_t i = 0; i < packets.size(); ++i) {
    const PacketMeta& src = packets[i];
    if (i > 0 && src.timestamp_us < prev_ts) {
      throw PreconditionError("packets out of time order at index " + std::to_string(i));
    }
    prev_ts = src.timestamp_us;

    SymKey sym = symmetric_key(src.key);
    auto it = open.find(sym);
    if (it != open.end() && src.timestamp_us - it->second.last_ts > idle_timeout_us) {
      close_flow(std::move(it->second));
      open.erase(it);
      it = open.end();
    }
    if (it == open.end()) {
      OpenFlow f;
      f.canon = src.key;
      f.insert_seq = seq++;
      it = open.emplace(sym, std::move(f)).first;
    }

    OpenFlow& flow = it->second;
    PacketMeta pkt = src;
    pkt.direction = (src.key == flow.canon) ? Direction::forward : Direction::backward;
    flow.packets.push_back(pkt);
    flow.last_ts = src.timestamp_us;

    bool rst = (pkt.tcp_flags & kRst) != 0;
    if ((pkt.tcp_flags & kFin) != 0) {
      if (pkt.direction == Direction::forward) {
        flow.fin_fwd = true;
      } else {
        flow.fin_bwd = true;
      }
    }
    if (rst || (flow.fin_fwd && flow.fin_bwd)) {
      close_flow(std::move(flow));
      open.erase(it);
    }
  }

  // flush still-open flows in first-packet order
  std::vector<OpenFlow*> remaining;
  remaining.reserve(open.size());
  for (auto& [key, flow] : open) remaining.push_back(&flow);
  std::sort(remaining.begin(), remaining.end(),
            [](const OpenFlow* a, const OpenFlow* b) { return a->insert_seq < b->insert_seq; });
  for (OpenFlow* f : remaining) close_flow(std::move(*f));
  return out;
}

}  // namespace metauad
