#pragma once

#include "simnl/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace simnl {

enum class FeatureKind { image, text };

std::string_view to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view text);

/// A labeled or unlabeled set of unit-norm feature rows.
///
/// Rows are stored as 32-bit floats, matching the on-disk format. Labels,
/// when present, index into [0, num_classes).
struct EmbeddingSet {
    MatrixF rows;
    std::optional<std::vector<std::uint32_t>> labels;
    int num_classes = 0;
    FeatureKind kind = FeatureKind::image;
    std::optional<std::vector<std::string>> class_names;

    [[nodiscard]] Index size() const noexcept { return rows.rows(); }
    [[nodiscard]] Index dim() const noexcept { return rows.cols(); }
    [[nodiscard]] bool has_labels() const noexcept { return labels.has_value(); }
};

/// K-shot support set plus held-out queries sharing dim, classes and ordering.
struct SupportQuerySplit {
    EmbeddingSet support;
    EmbeddingSet query;
    int shots = 0;
};

/// Output of synth_generate: the split plus matching positive/negative text features.
struct SyntheticDataset {
    SupportQuerySplit split;
    EmbeddingSet text_pos;
    EmbeddingSet text_neg;
};

inline constexpr double kUnitNormTolerance = 1e-5;

// --- SNLE binary format -----------------------------------------------------
//
// Little-endian: "SNLE" | u32 version(=1) | u32 header_len | JSON header |
// rows*dim f32 row-major | (has_labels) rows u32 labels.
// Validation is by exact file size; there is no checksum.

inline constexpr std::uint32_t kSnleVersion = 1;

/// Reads an SNLE file and re-normalizes every row to unit L2 norm.
/// Throws FormatError, TruncationError, DataError or IoError.
EmbeddingSet load_store(const std::filesystem::path& path);

/// Serializes `set` to its exact SNLE byte image.
std::vector<std::uint8_t> encode_store(const EmbeddingSet& set);

/// Parses an SNLE byte image; same normalization and errors as load_store.
EmbeddingSet decode_store(const std::vector<std::uint8_t>& bytes);

/// Writes `set` atomically (temp file then rename). Rejects sets that fail validate().
void save_store(const EmbeddingSet& set, const std::filesystem::path& path);

/// Empty iff every EmbeddingSet invariant holds.
std::vector<std::string> validate(const EmbeddingSet& set);

// --- synthetic data and label noise -----------------------------------------

struct SyntheticParams {
    int num_classes = 10;
    int dim = 64;
    int shots = 16;
    int queries_per_class = 50;
    double spread = 0.4;
    std::uint64_t seed = 0;
};

/// Class prototypes uniform on the sphere; samples are normalize(prototype +
/// spread * N(0, I)). Positive text row c is prototype c; negative text row c
/// is the normalized mean of the other prototypes.
SyntheticDataset synth_generate(const SyntheticParams& params);

/// Round-half-up flip count for a class of `shots` rows.
int flip_count(double fraction, int shots);

/// Relabels exactly flip_count(fraction, K) support rows per class to a
/// different class. New labels come from uniformly random derangements of the
/// class set, one per flip slot, so every class still holds exactly K rows.
SupportQuerySplit flip_labels(const SupportQuerySplit& split, double fraction,
                              std::uint64_t seed);

/// Throws ArgumentError unless the support holds exactly `shots` labeled rows
/// per class and support/query agree on dim and class count.
void check_split(const SupportQuerySplit& split);

}  // namespace simnl
