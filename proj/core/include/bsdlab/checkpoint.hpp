/*
 * Copyright 2026 The bsdlab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef BSDLAB_CHECKPOINT_HPP_
#define BSDLAB_CHECKPOINT_HPP_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bsdlab/models.hpp"
#include "bsdlab/numerics.hpp"

namespace bsdlab {

// Checkpoint container, format version 1:
//
//   bsdlab-checkpoint
//   format_version 1
//   <key> <value>            (free-form metadata, one pair per line)
//   blocks <count>
//   block <name> <rows> <cols>
//   ...
//   end
//   <little-endian IEEE-754 binary64 payload, one blob per block, in manifest order>
//
// Round trips are bit-exact.
struct Container {
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<std::pair<std::string, Matrix>> blocks;

  const std::string* find(const std::string& key) const;
  const std::string& get(const std::string& key) const;  // throws if missing
  const Matrix& block(const std::string& name) const;    // throws if missing
};

inline constexpr int kCheckpointVersion = 1;

void write_container(const std::filesystem::path& path, const Container& container);
Container read_container(const std::filesystem::path& path);

// Spec fields as header pairs and back.
void append_model_spec(const ModelSpec& spec, Container& container);
ModelSpec read_model_spec(const Container& container);

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace bsdlab

#endif  // BSDLAB_CHECKPOINT_HPP_
