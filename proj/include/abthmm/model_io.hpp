#pragma once

#include <filesystem>
#include <string>

#include "abthmm/compiler.hpp"

namespace abthmm {

/// JSON model file: n_states, n_symbols, pi, a, b, labels, and per state
/// edge_labels such as ["S:1", "F:5"] plus the matching edge_probs.
/// Terminal states have empty edge lists.
std::string model_to_json(const LabeledHmm& lhmm, int indent = 2);

/// Reads a model file. Without edge_labels the result has no edges and the
/// first two absorbing states become O_S and O_F. Without edge_probs each
/// edge takes an equal share of its A entry.
LabeledHmm model_from_json(std::string_view text);

void save_model(const std::filesystem::path& path, const LabeledHmm& lhmm);
LabeledHmm load_model(const std::filesystem::path& path);

}  // namespace abthmm
