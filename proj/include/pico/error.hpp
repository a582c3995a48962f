// Copyright 2026 The pico Authors
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pico {

enum class ErrorKind {
  kInvalidFlow,
  kOutOfBounds,
  kFormat,
  kDegenerateVideo,
  kMissingResiduals,
  kPermissiveness,
  kInsufficientFrames,
  kDegenerateEmbedding,
  kShape,
  kInvalidArgument,
  kIo,
};

const char* to_string(ErrorKind kind);

// Base of every error raised by the library. The kind selects the CLI exit
// code: format errors exit with 2, everything else with 3.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidFlow : public Error {
 public:
  explicit InvalidFlow(const std::string& what)
      : Error(ErrorKind::kInvalidFlow, what) {}
};

class OutOfBounds : public Error {
 public:
  explicit OutOfBounds(const std::string& what)
      : Error(ErrorKind::kOutOfBounds, what) {}
};

// Malformed serialized data. offset() is the byte position at which the
// reader gave up.
class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string& what)
      : Error(ErrorKind::kFormat,
              what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class DegenerateVideo : public Error {
 public:
  explicit DegenerateVideo(const std::string& what)
      : Error(ErrorKind::kDegenerateVideo, what) {}
};

class MissingResiduals : public Error {
 public:
  explicit MissingResiduals(const std::string& what)
      : Error(ErrorKind::kMissingResiduals, what) {}
};

class PermissivenessError : public Error {
 public:
  explicit PermissivenessError(const std::string& what)
      : Error(ErrorKind::kPermissiveness, what) {}
};

class InsufficientFrames : public Error {
 public:
  explicit InsufficientFrames(const std::string& what)
      : Error(ErrorKind::kInsufficientFrames, what) {}
};

class DegenerateEmbedding : public Error {
 public:
  explicit DegenerateEmbedding(const std::string& what)
      : Error(ErrorKind::kDegenerateEmbedding, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what)
      : Error(ErrorKind::kShape, what) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error(ErrorKind::kInvalidArgument, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidFlow: return "InvalidFlow";
    case ErrorKind::kOutOfBounds: return "OutOfBounds";
    case ErrorKind::kFormat: return "FormatError";
    case ErrorKind::kDegenerateVideo: return "DegenerateVideo";
    case ErrorKind::kMissingResiduals: return "MissingResiduals";
    case ErrorKind::kPermissiveness: return "PermissivenessError";
    case ErrorKind::kInsufficientFrames: return "InsufficientFrames";
    case ErrorKind::kDegenerateEmbedding: return "DegenerateEmbedding";
    case ErrorKind::kShape: return "ShapeError";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kIo: return "IoError";
  }
  return "Error";
}

}  // namespace pico
