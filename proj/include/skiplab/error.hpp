// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace skiplab {

/// Raised when an operation's preconditions are violated by its arguments
/// (shape mismatches, out-of-range indices, malformed files).
class RejectedInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Cosine similarity against a zero vector has no defined value.
class UndefinedSimilarity : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A non-finite loss or gradient showed up during training.
class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(const std::string& what, long step)
      : std::runtime_error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace skiplab
