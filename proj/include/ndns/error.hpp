// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace ndns {

// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem-level failure: missing file, unreadable, unwritable.
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Byte-level container damage: bad magic, truncated chunk, corrupt header.
struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Well-formed file whose encoding we do not handle (channel count,
// bit depth, codec, ...). Kept distinct from FormatError so callers can
// tell "broken file" from "valid file outside the supported profile".
struct UnsupportedFormatError : FormatError {
  explicit UnsupportedFormatError(const std::string& msg) : FormatError(msg) {}
};

// Model file with a format version newer than this build understands.
struct VersionError : FormatError {
  explicit VersionError(const std::string& msg) : FormatError(msg) {}
};

// Precondition violation on an in-memory argument.
struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

}  // namespace ndns
