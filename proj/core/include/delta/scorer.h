#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "delta/core.h"

namespace delta {

// A backend mapping a token prefix to full-vocabulary logits. Implementations
// must be deterministic (identical prefixes give bitwise-identical logits) and
// safe to call concurrently.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual LogitVector score(std::span<const TokenId> prefix) const = 0;
  virtual std::string label() const { return "scorer"; }
};

}  // namespace delta
