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

#ifndef BSDLAB_ERROR_HPP_
#define BSDLAB_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace bsdlab {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files. The kind distinguishes failures that callers (and
// tests) need to tell apart.
class FormatError : public Error {
 public:
  enum class Kind {
    kBadMagic,
    kTruncated,
    kLabelOutOfRange,
    kRowMismatch,
    kBadValue,
    kIo,
  };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace bsdlab

#endif  // BSDLAB_ERROR_HPP_
