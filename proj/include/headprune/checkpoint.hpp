#pragma once

#include <filesystem>
#include <string>

#include "headprune/model.hpp"

namespace headprune {

// JSON checkpoint: {config, embedding, layers[{heads[{w_q,w_k,w_v}], w_o}], classifier,
// head_index_map}. Matrices are {rows, cols, data} with row-major data printed at 17
// significant digits, so a save/load round trip is bit-exact. head_index_map lists the
// surviving 1-based head indices of every layer.
std::string checkpoint_to_string(const EncoderModel& model);

// Throws ParseError with a byte offset (syntax) or a field path (schema).
EncoderModel checkpoint_from_string(const std::string& text);

// Writes through a temporary file and renames it into place. IoError on failure.
void save_checkpoint(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel load_checkpoint(const std::filesystem::path& path);

}  // namespace headprune
