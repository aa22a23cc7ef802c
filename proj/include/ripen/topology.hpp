#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "ripen/csv.hpp"
#include "ripen/errors.hpp"
#include "ripen/rng.hpp"

namespace ripen {

// Trolley dimensions: 4 multiplexers x 8 antenna ports x 4 fruit slots x 3 tags.
inline constexpr int kMuxCount = 4;
inline constexpr int kPortsPerMux = 8;
inline constexpr int kSlotsPerAntenna = 4;
inline constexpr int kTagsPerFruit = 3;
inline constexpr int kFruitCount = kMuxCount * kPortsPerMux * kSlotsPerAntenna;  // 128
inline constexpr int kTagCount = kFruitCount * kTagsPerFruit;                     // 384

// A is the basal tag, B and C the eccentric ones.
enum class TagPosition : std::uint8_t { A = 0, B = 1, C = 2 };

inline constexpr std::array<TagPosition, 3> kTagPositions{TagPosition::A, TagPosition::B,
                                                          TagPosition::C};

inline char to_char(TagPosition p) { return static_cast<char>('A' + static_cast<int>(p)); }

inline TagPosition tag_position_from(std::string_view s) {
  if (s == "A") return TagPosition::A;
  if (s == "B") return TagPosition::B;
  if (s == "C") return TagPosition::C;
  throw AddressError("bad tag position '" + std::string(s) + "'");
}

struct FruitId {
  int ordinal = 0;  // 1..128
  auto operator<=>(const FruitId&) const = default;
};

struct TagAddress {
  int mux = 1;           // 1..4
  int antenna_port = 1;  // 1..8
  int fruit_slot = 1;    // 1..4
  TagPosition position = TagPosition::A;

  auto operator<=>(const TagAddress&) const = default;

  bool valid() const {
    return mux >= 1 && mux <= kMuxCount && antenna_port >= 1 && antenna_port <= kPortsPerMux &&
           fruit_slot >= 1 && fruit_slot <= kSlotsPerAntenna;
  }

  // Zero-based position in scan order.
  int scan_index() const {
    return (((mux - 1) * kPortsPerMux + (antenna_port - 1)) * kSlotsPerAntenna + (fruit_slot - 1)) *
               kTagsPerFruit +
           static_cast<int>(position);
  }

  // Zero-based antenna index (i, j) flattened.
  int antenna_index() const { return (mux - 1) * kPortsPerMux + (antenna_port - 1); }
};

inline std::ostream& operator<<(std::ostream& os, const TagAddress& a) {
  return os << "(mux=" << a.mux << ",port=" << a.antenna_port << ",slot=" << a.fruit_slot
            << ",pos=" << to_char(a.position) << ")";
}

inline std::string to_string(const TagAddress& a) {
  return "(" + std::to_string(a.mux) + "," + std::to_string(a.antenna_port) + "," +
         std::to_string(a.fruit_slot) + "," + to_char(a.position) + ")";
}

inline void require_valid(const TagAddress& a) {
  if (!a.valid()) throw AddressError("tag address out of range: " + to_string(a));
}

inline FruitId fruit_of(const TagAddress& a) {
  require_valid(a);
  return FruitId{((a.mux - 1) * kPortsPerMux + (a.antenna_port - 1)) * kSlotsPerAntenna +
                 a.fruit_slot};
}

inline TagAddress address_of(FruitId f, TagPosition pos) {
  if (f.ordinal < 1 || f.ordinal > kFruitCount)
    throw AddressError("fruit id out of range: " + std::to_string(f.ordinal));
  const int z = f.ordinal - 1;
  return TagAddress{z / (kPortsPerMux * kSlotsPerAntenna) + 1,
                    (z / kSlotsPerAntenna) % kPortsPerMux + 1, z % kSlotsPerAntenna + 1, pos};
}

// mux -> port -> slot -> position, all ascending.
inline std::vector<TagAddress> enumerate_addresses() {
  std::vector<TagAddress> out;
  out.reserve(kTagCount);
  for (int i = 1; i <= kMuxCount; ++i)
    for (int j = 1; j <= kPortsPerMux; ++j)
      for (int k = 1; k <= kSlotsPerAntenna; ++k)
        for (auto t : kTagPositions) out.push_back(TagAddress{i, j, k, t});
  return out;
}

// 24 hex characters: fixed prefix, packed address, fruit, and a 16-bit check.
inline std::string synthetic_epc(const TagAddress& a) {
  require_valid(a);
  char body[21];
  std::snprintf(body, sizeof body, "E2801160%02X%02X%02X%02X%04X", a.mux, a.antenna_port,
                a.fruit_slot, static_cast<int>(a.position), fruit_of(a).ordinal);
  const auto h = fnv1a64(body, 20);
  char out[25];
  std::snprintf(out, sizeof out, "%s%04X", body, static_cast<unsigned>(h & 0xFFFF));
  return std::string(out, 24);
}

struct TagListEntry {
  FruitId fruit;
  std::string epc;
};

// Binds every tag to its fruit and to the single antenna (mux, port) in its address.
class TagList {
 public:
  TagList() = default;

  static TagList full_trolley() {
    TagList tl;
    for (const auto& a : enumerate_addresses()) tl.add(a, TagListEntry{fruit_of(a), synthetic_epc(a)});
    return tl;
  }

  void add(const TagAddress& a, TagListEntry e) {
    require_valid(a);
    if (fruit_of(a) != e.fruit)
      throw AddressError("tag " + to_string(a) + " bound to foreign fruit " +
                         std::to_string(e.fruit.ordinal));
    if (!entries_.emplace(a, std::move(e)).second)
      throw AddressError("duplicate tag list entry " + to_string(a));
  }

  const std::map<TagAddress, TagListEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const TagAddress& a) const { return entries_.count(a) != 0; }

  const TagListEntry& at(const TagAddress& a) const {
    auto it = entries_.find(a);
    if (it == entries_.end()) throw AddressError("tag not in list: " + to_string(a));
    return it->second;
  }

  // Every listed fruit must carry all three tags.
  void validate() const {
    std::map<FruitId, int> per_fruit;
    for (const auto& [a, e] : entries_) ++per_fruit[e.fruit];
    for (const auto& [f, n] : per_fruit)
      if (n != kTagsPerFruit)
        throw AddressError("fruit " + std::to_string(f.ordinal) + " has " + std::to_string(n) +
                           " tags, expected 3");
  }

  static constexpr std::string_view kCsvHeader = "mux,port,slot,position,fruit_id,epc";

  void write_csv(std::ostream& os) const {
    os << kCsvHeader << '\n';
    for (const auto& [a, e] : entries_)
      os << a.mux << ',' << a.antenna_port << ',' << a.fruit_slot << ',' << to_char(a.position)
         << ',' << e.fruit.ordinal << ',' << e.epc << '\n';
  }

  static TagList read_csv(const std::string& path) {
    csv::Reader r(path, kCsvHeader);
    TagList tl;
    std::vector<std::string_view> f;
    while (r.next(f)) {
      TagAddress a{static_cast<int>(csv::to_int(f[0], "mux")),
                   static_cast<int>(csv::to_int(f[1], "port")),
                   static_cast<int>(csv::to_int(f[2], "slot")), tag_position_from(f[3])};
      tl.add(a, TagListEntry{FruitId{static_cast<int>(csv::to_int(f[4], "fruit_id"))},
                             std::string(f[5])});
    }
    tl.validate();
    return tl;
  }

 private:
  std::map<TagAddress, TagListEntry> entries_;
};

}  // namespace ripen
