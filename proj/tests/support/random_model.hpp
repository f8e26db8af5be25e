#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "liatm/dfd.hpp"
#include "liatm/otm.hpp"

namespace liatm::testing {

struct RandomModelOptions {
  std::size_t max_elements = 10;
  double llm_tag_probability = 0.4;
  bool exotic_names = true;  // quotes, escapes, non-ASCII
};

// Valid by construction: unique ids, at most 2n flows, boundaries non-empty
// and disjoint.
dfd::Model random_model(std::mt19937_64& rng, const RandomModelOptions& options = {});

// Structurally valid document over `components` component ids with random
// threats and mitigations.
otm::Document random_document(std::mt19937_64& rng, std::size_t max_components = 6);

std::string random_identifier(std::mt19937_64& rng);

}  // namespace liatm::testing
