#pragma once

#include <stdexcept>

namespace lcb {

// Non-finite training loss.
struct FitDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every particle hit the proposal cap at some timestep during training.
struct ParticleCollapse : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or unknown configuration keys.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Artifact on disk disagrees with the configuration consuming it.
struct ArtifactMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lcb
