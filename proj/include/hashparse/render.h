#pragma once

#include <span>
#include <string>

#include "hashparse/chart.h"

namespace hashparse {

// Uppercase hexadecimal with bit 0 of the code as the most significant bit,
// +1 written as 1 and -1 as 0, left-padded to ceil(K / 4) digits.
std::string code_hex(const Code& code);

enum class TreeFormat { brackets, codes };

// One line per tree. Brackets: every node labelled "X". Codes: every node
// labelled with its code in hexadecimal.
std::string render_tree(const BinaryTree& tree, std::span<const std::string> words, TreeFormat format);

}  // namespace hashparse
