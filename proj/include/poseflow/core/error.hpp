// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <exception>
#include <stdexcept>
#include <string>

namespace poseflow {

// Root of every error the library throws. Callers that only need to report a
// failure can catch this; the subclasses exist so tests and the CLI can map
// failures onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed bytes on disk or on a stream (bad magic, truncation, overflow).
class FormatError : public Error {
 public:
  using Error::Error;
};

// A caller violated a precondition (wrong rank, out-of-bounds keypoint...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration, topology, profile or corpus file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Inference backend failure. Nested causes (e.g. a FormatError from a corrupt
// dump) are kept via std::throw_with_nested.
class BackendError : public Error {
 public:
  using Error::Error;
};

// Malformed pipeline graph.
class GraphError : public Error {
 public:
  using Error::Error;
};

class ChannelClosed : public Error {
 public:
  explicit ChannelClosed(const std::string& what = "send on closed channel") : Error(what) {}
};

inline std::string with_context(const std::string& what, const std::string& context) {
  return context.empty() ? what : context + ": " + what;
}

// Full message of an exception including std::nested_exception causes.
inline std::string describe_exception(const std::exception& e) {
  std::string msg = e.what();
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    msg += ": caused by: " + describe_exception(inner);
  } catch (...) {
    msg += ": caused by: unknown error";
  }
  return msg;
}

inline std::string describe_exception_ptr(std::exception_ptr e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return describe_exception(ex);
  } catch (...) {
    return "unknown error";
  }
}

}  // namespace poseflow
