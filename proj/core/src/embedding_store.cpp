#include "simnl/embedding_store.hpp"

#include "simnl/errors.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <system_error>

namespace simnl {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'S', 'N', 'L', 'E'};
constexpr std::size_t kPreambleSize = 12;  // magic + version + header_len

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t value) {
    for (int shift = 0; shift < 32; shift += 8) {
        out.push_back(static_cast<std::uint8_t>((value >> shift) & 0xFFu));
    }
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

double row_norm(const MatrixF& rows, Index r) {
    double sum = 0.0;
    for (Index j = 0; j < rows.cols(); ++j) {
        const double v = rows(r, j);
        sum += v * v;
    }
    return std::sqrt(sum);
}

std::uint64_t read_count(const nlohmann::json& header, const char* key) {
    if (!header.contains(key) || !header[key].is_number_unsigned()) {
        throw FormatError(std::string("SNLE header: missing or invalid \"") + key + "\"");
    }
    return header[key].get<std::uint64_t>();
}

}  // namespace

std::string_view to_string(FeatureKind kind) {
    return kind == FeatureKind::image ? "image" : "text";
}

FeatureKind parse_feature_kind(std::string_view text) {
    if (text == "image") return FeatureKind::image;
    if (text == "text") return FeatureKind::text;
    throw FormatError("unknown feature kind \"" + std::string(text) + "\"");
}

std::vector<std::string> validate(const EmbeddingSet& set) {
    std::vector<std::string> violations;
    if (set.size() < 1) violations.emplace_back("set has no rows (need N >= 1)");
    if (set.dim() < 2) violations.push_back("dim " + std::to_string(set.dim()) + " < 2");
    if (set.num_classes < 2) {
        violations.push_back("num_classes " + std::to_string(set.num_classes) + " < 2");
    }
    for (Index r = 0; r < set.size(); ++r) {
        if (!set.rows.row(r).allFinite()) {
            violations.push_back("row " + std::to_string(r) + " has a non-finite entry");
            continue;
        }
        const double norm = row_norm(set.rows, r);
        if (std::abs(norm - 1.0) > kUnitNormTolerance) {
            std::ostringstream msg;
            msg << "row " << r << " has L2 norm " << norm << " (expected 1)";
            violations.push_back(msg.str());
        }
    }
    if (set.labels) {
        const auto& labels = *set.labels;
        if (static_cast<Index>(labels.size()) != set.size()) {
            violations.push_back("label count " + std::to_string(labels.size()) +
                                 " != row count " + std::to_string(set.size()));
        }
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (set.num_classes < 0 || labels[i] >= static_cast<std::uint32_t>(set.num_classes)) {
                violations.push_back("row " + std::to_string(i) + " has label " +
                                     std::to_string(labels[i]) + " outside [0, " +
                                     std::to_string(set.num_classes) + ")");
            }
        }
    }
    if (set.class_names && static_cast<int>(set.class_names->size()) != set.num_classes) {
        violations.push_back("class_names has " + std::to_string(set.class_names->size()) +
                             " entries for " + std::to_string(set.num_classes) + " classes");
    }
    return violations;
}

std::vector<std::uint8_t> encode_store(const EmbeddingSet& set) {
    if (auto problems = validate(set); !problems.empty()) {
        throw DataError("cannot serialize invalid embedding set: " + problems.front());
    }
    nlohmann::json header = {
        {"dim", static_cast<std::uint64_t>(set.dim())},
        {"rows", static_cast<std::uint64_t>(set.size())},
        {"classes", static_cast<std::uint64_t>(set.num_classes)},
        {"kind", std::string(to_string(set.kind))},
        {"has_labels", set.has_labels()},
    };
    if (set.class_names) header["class_names"] = *set.class_names;
    const std::string header_text = header.dump();

    std::vector<std::uint8_t> out;
    const std::size_t payload = static_cast<std::size_t>(set.rows.size()) * 4 +
                                (set.labels ? set.labels->size() * 4 : 0);
    out.reserve(kPreambleSize + header_text.size() + payload);
    for (std::uint8_t b : kMagic) out.push_back(b);
    put_u32(out, kSnleVersion);
    put_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out.insert(out.end(), header_text.begin(), header_text.end());
    for (Index r = 0; r < set.rows.rows(); ++r) {
        for (Index c = 0; c < set.rows.cols(); ++c) {
            put_u32(out, std::bit_cast<std::uint32_t>(set.rows(r, c)));
        }
    }
    if (set.labels) {
        for (std::uint32_t label : *set.labels) put_u32(out, label);
    }
    return out;
}

EmbeddingSet decode_store(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kPreambleSize) {
        throw TruncationError("SNLE file shorter than its 12-byte preamble");
    }
    if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw FormatError("bad SNLE magic");
    }
    const std::uint32_t version = get_u32(bytes.data() + 4);
    if (version != kSnleVersion) {
        throw FormatError("unsupported SNLE version " + std::to_string(version));
    }
    const std::uint32_t header_len = get_u32(bytes.data() + 8);
    if (bytes.size() < kPreambleSize + header_len) {
        throw TruncationError("SNLE header extends past end of file");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + kPreambleSize,
                                       bytes.begin() + kPreambleSize + header_len);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("SNLE header is not valid JSON: ") + e.what());
    }
    if (!header.is_object()) throw FormatError("SNLE header is not a JSON object");

    const std::uint64_t dim = read_count(header, "dim");
    const std::uint64_t rows = read_count(header, "rows");
    const std::uint64_t classes = read_count(header, "classes");
    if (!header.contains("kind") || !header["kind"].is_string()) {
        throw FormatError("SNLE header: missing or invalid \"kind\"");
    }
    if (!header.contains("has_labels") || !header["has_labels"].is_boolean()) {
        throw FormatError("SNLE header: missing or invalid \"has_labels\"");
    }
    const bool has_labels = header["has_labels"].get<bool>();

    EmbeddingSet set;
    set.kind = parse_feature_kind(header["kind"].get<std::string>());
    set.num_classes = static_cast<int>(classes);
    if (header.contains("class_names")) {
        if (!header["class_names"].is_array()) {
            throw FormatError("SNLE header: \"class_names\" must be an array");
        }
        set.class_names = header["class_names"].get<std::vector<std::string>>();
    }

    const std::uint64_t expected = kPreambleSize + header_len + rows * dim * 4 +
                                   (has_labels ? rows * 4 : 0);
    if (bytes.size() < expected) {
        throw TruncationError("SNLE payload truncated: expected " + std::to_string(expected) +
                              " bytes, found " + std::to_string(bytes.size()));
    }
    if (bytes.size() > expected) {
        throw TruncationError("SNLE payload has " + std::to_string(bytes.size() - expected) +
                              " trailing bytes");
    }

    set.rows.resize(static_cast<Index>(rows), static_cast<Index>(dim));
    const std::uint8_t* p = bytes.data() + kPreambleSize + header_len;
    for (Index r = 0; r < set.rows.rows(); ++r) {
        for (Index c = 0; c < set.rows.cols(); ++c, p += 4) {
            set.rows(r, c) = std::bit_cast<float>(get_u32(p));
        }
    }
    if (has_labels) {
        std::vector<std::uint32_t> labels(rows);
        for (auto& label : labels) {
            label = get_u32(p);
            p += 4;
        }
        set.labels = std::move(labels);
    }

    // Rows already within tolerance are kept bit-exact; the rest are rescaled.
    for (Index r = 0; r < set.rows.rows(); ++r) {
        if (!set.rows.row(r).allFinite()) {
            throw DataError("row " + std::to_string(r) + " has a non-finite entry");
        }
        const double norm = row_norm(set.rows, r);
        if (norm == 0.0) throw DataError("row " + std::to_string(r) + " has zero norm");
        if (std::abs(norm - 1.0) > kUnitNormTolerance) {
            for (Index c = 0; c < set.rows.cols(); ++c) {
                set.rows(r, c) = static_cast<float>(set.rows(r, c) / norm);
            }
        }
    }
    if (auto problems = validate(set); !problems.empty()) {
        throw DataError("invalid embedding set: " + problems.front());
    }
    return set;
}

EmbeddingSet load_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for " + path.string());
    return decode_store(bytes);
}

void save_store(const EmbeddingSet& set, const std::filesystem::path& path) {
    const auto bytes = encode_store(set);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move " + tmp.string() + " to " + path.string());
    }
}

}  // namespace simnl
