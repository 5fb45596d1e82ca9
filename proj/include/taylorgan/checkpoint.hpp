// SPDX-License-Identifier: Apache-2.0
/**
 * @file   checkpoint.hpp
 * @brief  Versioned model snapshots.
 *
 * Layout:
 *   line 1  "TAYLORGAN-CKPT 1"
 *   line 2  one JSON object: vocabulary, model configs, step, baseline and the
 *           ordered tensor list [{"name", "shape"}]
 *   rest    the tensors' values back to back, little-endian IEEE-754 float64,
 *           row-major, in list order
 * Power-iteration vectors are stored as "disc/power/<i>/u" and ".../v".
 */
#pragma once

#include <string>

#include "taylorgan/discriminator.hpp"
#include "taylorgan/estimators.hpp"
#include "taylorgan/generator.hpp"

namespace taylorgan {

inline constexpr const char *kCheckpointMagic = "TAYLORGAN-CKPT";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Vocabulary vocab;
  Generator generator;
  Discriminator discriminator;
  std::size_t step = 0;
  BaselineState baseline;
};

/// Writes to `path` via a temporary file and rename.
void save_checkpoint(const std::string &path, const Vocabulary &vocab,
                     const Generator &gen, const Discriminator &disc,
                     std::size_t step, const BaselineState &baseline);

/// Throws std::runtime_error on a missing file, bad magic/version, truncated
/// data or tensors that do not match the stored configs.
Checkpoint load_checkpoint(const std::string &path);

} // namespace taylorgan
