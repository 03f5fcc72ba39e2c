#pragma once

#include <stdexcept>
#include <string>

namespace defdis {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or length disagreement between operands.
struct DimensionError : Error { using Error::Error; };
// Non-finite values where finite ones are required.
struct NumericError : Error { using Error::Error; };
// Out-of-range index (token id, latent dimension, ...).
struct IndexError : Error { using Error::Error; };
// Malformed input file; message carries the line number where known.
struct ParseError : Error { using Error::Error; };
// Invalid configuration (overlapping factor subsets, bad fractions, ...).
struct ConfigError : Error { using Error::Error; };
// API misuse: wrong variant, missing roles, bad flag combination.
struct UsageError : Error { using Error::Error; };
// Training diverged or could not proceed.
struct TrainingError : Error { using Error::Error; };
// Checkpoint file unreadable, truncated or of the wrong version.
struct CheckpointError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
// Degenerate or insufficient data for the requested computation.
struct DataError : Error { using Error::Error; };

}  // namespace defdis
