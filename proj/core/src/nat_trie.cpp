#include "isclab/nat_trie.hpp"

#include "isclab/errors.hpp"

namespace isclab {

namespace {

inline std::uint32_t bit_at(std::uint32_t address, std::uint8_t index) {
  return (address >> (31 - index)) & 1u;
}

}  // namespace

NatTrie::NatTrie(const std::vector<NatEntry>& entries) {
  for (const NatEntry& e : entries) insert(e);
}

void NatTrie::insert(const NatEntry& entry) {
  if (entry.prefix_len > 32) throw ValidationError("prefix length exceeds 32");
  if (entry.prefix_len < 32 && (entry.prefix & ((1u << (32 - entry.prefix_len)) - 1)) != 0)
    throw ValidationError("prefix has bits below its mask");

  if (!root_) root_ = std::make_unique<Node>();
  Node* node = root_.get();
  for (std::uint8_t d = 0; d < entry.prefix_len; ++d) {
    const std::uint32_t b = bit_at(entry.prefix, d);
    if (!node->child[b]) {
      node->child[b] = std::make_unique<Node>();
      node->child[b]->depth = static_cast<std::uint8_t>(d + 1);
    }
    node = node->child[b].get();
  }
  if (!node->terminal) ++size_;
  node->terminal = true;
  node->translation = entry.translation;
}

NatLookup NatTrie::lookup(std::uint32_t address) const {
  NatLookup result;
  const Node* node = root_.get();
  std::uint8_t depth = 0;
  while (node) {
    if (node->terminal) {
      result.matched = true;
      result.translation = node->translation;
      result.matched_len = depth;
    }
    if (depth == 32) break;
    const Node* next = node->child[bit_at(address, depth)].get();
    if (!next) break;
    ++result.bits_visited;  // edges walked
    ++depth;
    node = next;
  }
  return result;
}

NatLookup linear_scan_lookup(const std::vector<NatEntry>& entries, std::uint32_t address) {
  NatLookup best;
  for (const NatEntry& e : entries) {
    const std::uint32_t mask =
        e.prefix_len == 0 ? 0u : ~std::uint32_t{0} << (32 - e.prefix_len);
    if ((address & mask) != e.prefix) continue;
    // >= keeps the last among duplicates, matching trie insert overwrite.
    if (!best.matched || e.prefix_len >= best.matched_len) {
      best.matched = true;
      best.matched_len = e.prefix_len;
      best.translation = e.translation;
    }
  }
  return best;
}

}  // namespace isclab
