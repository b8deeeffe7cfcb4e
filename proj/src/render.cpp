#include "hashparse/render.h"

#include <stdexcept>
#include <string_view>

namespace hashparse {

std::string code_hex(const Code& code) {
  static const char kDigits[] = "0123456789ABCDEF";
  const int bits = static_cast<int>(code.size());
  const int digits = (bits + 3) / 4;
  std::string out(digits, '0');
  // Bit k sits at position bits - 1 - k counted from the least significant end.
  for (int k = 0; k < bits; ++k) {
    if (code[k] <= 0) continue;
    const int position = bits - 1 - k;
    char& c = out[digits - 1 - position / 4];
    int value = static_cast<int>(std::string_view(kDigits).find(c)) | (1 << (position % 4));
    c = kDigits[value];
  }
  return out;
}

std::string render_tree(const BinaryTree& tree, std::span<const std::string> words, TreeFormat format) {
  if (static_cast<int>(words.size()) != tree.n) throw std::invalid_argument("word count does not match tree");
  std::string out;
  size_t pos = 0;
  // Pre-order nodes: recurse over the list, consuming one node per call.
  auto walk = [&](auto&& self) -> void {
    const TreeNode& node = tree.nodes.at(pos++);
    out += '(';
    out += format == TreeFormat::codes ? code_hex(node.code) : std::string("X");
    if (node.is_leaf()) {
      out += ' ';
      out += words[node.left];
    } else {
      out += ' ';
      self(self);
      out += ' ';
      self(self);
    }
    out += ')';
  };
  walk(walk);
  return out;
}

}  // namespace hashparse
