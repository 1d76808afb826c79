#pragma once

#include <cstdint>
#include <memory>
#include <vector>

namespace isclab {

struct NatEntry {
  std::uint32_t prefix = 0;      // network-order bits in a host u32
  std::uint8_t prefix_len = 0;   // 0..32
  std::uint32_t translation = 0;

  friend bool operator==(const NatEntry&, const NatEntry&) = default;
};

struct NatLookup {
  bool matched = false;
  std::uint32_t translation = 0;
  std::uint8_t matched_len = 0;
  std::uint32_t bits_visited = 0;  // trie edges walked, feeds the delay model
};

// Binary (one bit per level) longest-prefix-match trie.
class NatTrie {
 public:
  NatTrie() = default;
  explicit NatTrie(const std::vector<NatEntry>& entries);

  void insert(const NatEntry& entry);  // ValidationError on malformed prefix
  NatLookup lookup(std::uint32_t address) const;
  bool has_default_route() const { return root_ && root_->terminal; }
  std::size_t size() const { return size_; }

 private:
  struct Node {
    std::unique_ptr<Node> child[2];
    bool terminal = false;
    std::uint32_t translation = 0;
    std::uint8_t depth = 0;
  };

  std::unique_ptr<Node> root_;
  std::size_t size_ = 0;
};

// Reference longest-prefix match by scanning every entry; the independent
// oracle the trie is checked against.
NatLookup linear_scan_lookup(const std::vector<NatEntry>& entries, std::uint32_t address);

}  // namespace isclab
