#pragma once

#include <cstdint>

#include "mmlg/tensor.hpp"

namespace mmlg {

// Reserved vocabulary layout, shared by the vocabulary builder, the model and
// the trainer. Text subwords start at kReservedIds; ids below that are never
// produced by text encoding.
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kEosId = 1;
inline constexpr TokenId kUnkId = 2;
inline constexpr TokenId kTaskTokenBase = 3;
inline constexpr std::size_t kMaxTaskTokens = 29;  // ids 3..31
inline constexpr TokenId kLabelTokenBase = 32;
inline constexpr std::size_t kMaxLabelTokens = 32;  // ids 32..63
inline constexpr std::size_t kReservedIds = 64;

inline constexpr bool is_task_token(TokenId id) {
  return id >= kTaskTokenBase && id < kLabelTokenBase;
}
inline constexpr bool is_label_token(TokenId id) {
  return id >= kLabelTokenBase && id < TokenId(kReservedIds);
}
inline constexpr TokenId label_token_for_class(std::size_t class_index) {
  return kLabelTokenBase + TokenId(class_index);
}
inline constexpr std::size_t class_for_label_token(TokenId id) {
  return std::size_t(id - kLabelTokenBase);
}

}  // namespace mmlg
