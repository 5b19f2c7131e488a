// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace nmt {

/// Reserved vocabulary ids shared by every vocabulary.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kBosId = 2;
inline constexpr int kEosId = 3;
inline constexpr int kReservedIds = 4;

}  // namespace nmt
