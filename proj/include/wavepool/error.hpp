// Copyright 2026 The wavepool Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wavepool {

enum class ErrorCode {
  UnsupportedWavelet,
  OddLengthInput,
  InputTooShort,
  ShapeMismatch,
  InvalidHyperparameter,
  MissingGradient,
  InvalidConfig,
  InputTooLarge,
  CorruptDataset,
  DatasetNotFound,
  MissingArtifact,
  UnsupportedFormat,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnsupportedWavelet: return "UnsupportedWavelet";
    case ErrorCode::OddLengthInput: return "OddLengthInput";
    case ErrorCode::InputTooShort: return "InputTooShort";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidHyperparameter: return "InvalidHyperparameter";
    case ErrorCode::MissingGradient: return "MissingGradient";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InputTooLarge: return "InputTooLarge";
    case ErrorCode::CorruptDataset: return "CorruptDataset";
    case ErrorCode::DatasetNotFound: return "DatasetNotFound";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace wavepool
