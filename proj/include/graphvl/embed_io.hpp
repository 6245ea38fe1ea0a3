#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "graphvl/binary_io.hpp"
#include "graphvl/error.hpp"
#include "graphvl/matrix.hpp"

namespace graphvl {

/// n × d embedding rows with optional class ids (-1 marks an unlabeled row).
struct EmbeddingSet {
    Matrix<float> data;
    std::optional<std::vector<std::int32_t>> labels;
    std::vector<std::string> class_names;
    int known_class_count = 0;

    std::size_t size() const { return data.rows(); }
    std::size_t dim() const { return data.cols(); }
    bool has_labels() const { return labels.has_value(); }

    /// Number of classes implied by the names if present, else by the largest label.
    int class_count() const {
        if (!class_names.empty()) return static_cast<int>(class_names.size());
        int c = 0;
        if (labels) {
            for (auto l : *labels) c = std::max(c, l + 1);
        }
        return c;
    }

    friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

inline void validate(const EmbeddingSet& set) {
    if (set.size() < 1 || set.dim() < 1) {
        throw Error(ErrorCode::InvalidArgument, "embed_io", "embedding set must have n >= 1 and d >= 1");
    }
    for (std::size_t i = 0; i < set.data.size(); ++i) {
        if (!std::isfinite(set.data.values()[i])) {
            throw Error(ErrorCode::NonFiniteValue, "embed_io",
                        "row " + std::to_string(i / set.dim()) + " column " + std::to_string(i % set.dim()));
        }
    }
    if (set.labels) {
        if (set.labels->size() != set.size()) {
            throw Error(ErrorCode::ShapeMismatch, "embed_io", "label count differs from row count");
        }
        const int classes = set.class_names.empty() ? std::numeric_limits<int>::max()
                                                    : static_cast<int>(set.class_names.size());
        for (std::size_t i = 0; i < set.labels->size(); ++i) {
            const auto l = (*set.labels)[i];
            if (l < -1 || l >= classes) {
                throw Error(ErrorCode::LabelOutOfRange, "embed_io",
                            "label " + std::to_string(l) + " at row " + std::to_string(i));
            }
        }
    }
    if (!set.class_names.empty() && set.known_class_count > static_cast<int>(set.class_names.size())) {
        throw Error(ErrorCode::InvalidArgument, "embed_io", "known_class_count exceeds class count");
    }
}

/// A labeled split: every row labeled with a known class id.
inline void validate_labeled_split(const EmbeddingSet& set, int known_class_count) {
    validate(set);
    if (!set.labels) throw Error(ErrorCode::InvalidArgument, "embed_io", "labeled split has no labels");
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto l = (*set.labels)[i];
        if (l < 0 || l >= known_class_count) {
            throw Error(ErrorCode::LabelOutOfRange, "embed_io",
                        "labeled row " + std::to_string(i) + " has label " + std::to_string(l) + ", expected [0, " +
                            std::to_string(known_class_count) + ")");
        }
    }
}

// ---------------------------------------------------------------------------
// GVLE: "GVLE" | n u32 | d u32 | has_labels u8 | n*d f32 | [n i32]

inline std::vector<unsigned char> encode_embedding_set(const EmbeddingSet& set) {
    validate(set);
    detail::ByteWriter w;
    w.put_bytes("GVLE", 4);
    w.put(static_cast<std::uint32_t>(set.size()));
    w.put(static_cast<std::uint32_t>(set.dim()));
    w.put(static_cast<std::uint8_t>(set.labels ? 1 : 0));
    for (float v : set.data.values()) w.put(v);
    if (set.labels) {
        for (auto l : *set.labels) w.put(l);
    }
    return w.bytes();
}

inline EmbeddingSet decode_embedding_set(std::vector<unsigned char> bytes) {
    detail::ByteReader r(std::move(bytes), "embed_io");
    if (r.remaining() < 4 || r.get_bytes(4, "magic") != "GVLE") {
        throw Error(ErrorCode::BadMagic, "embed_io", "expected magic \"GVLE\" at offset 0");
    }
    const auto n = r.get<std::uint32_t>("row count");
    const auto d = r.get<std::uint32_t>("dimension");
    const auto flag_offset = r.offset();
    const auto has_labels = r.get<std::uint8_t>("label flag");
    if (has_labels > 1) {
        throw Error(ErrorCode::InvalidArgument, "embed_io",
                    "label flag at offset " + std::to_string(flag_offset) + " must be 0 or 1");
    }
    const std::uint64_t count = static_cast<std::uint64_t>(n) * d;
    r.need(count * sizeof(float), "payload");
    EmbeddingSet set;
    set.data = Matrix<float>(n, d);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto off = r.offset();
        const float v = r.get<float>("payload");
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::NonFiniteValue, "embed_io", "non-finite payload value at offset " + std::to_string(off));
        }
        set.data.values()[i] = v;
    }
    if (has_labels) {
        r.need(static_cast<std::uint64_t>(n) * sizeof(std::int32_t), "labels");
        std::vector<std::int32_t> labels(n);
        for (auto& l : labels) {
            const auto off = r.offset();
            l = r.get<std::int32_t>("labels");
            if (l < -1) {
                throw Error(ErrorCode::LabelOutOfRange, "embed_io",
                            "label " + std::to_string(l) + " at offset " + std::to_string(off));
            }
        }
        set.labels = std::move(labels);
    }
    r.expect_end();
    if (n == 0 || d == 0) throw Error(ErrorCode::InvalidArgument, "embed_io", "file declares n = 0 or d = 0");
    return set;
}

inline EmbeddingSet read_embedding_file(const std::filesystem::path& path) {
    return decode_embedding_set(detail::read_file_bytes(path, "embed_io"));
}

inline void write_embedding_file(const EmbeddingSet& set, const std::filesystem::path& path) {
    detail::write_file_bytes(path, encode_embedding_set(set), "embed_io");
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
    int knn_k = 3;
    int gcn_layers = 2;
    double margin_alpha = 0.3;
    double learn_rate = 1e-3;
    int batch_size = 128;
    int epochs = 100;
    std::uint64_t seed = 0;
    int hidden_dim = 0; // 0 resolves to the embedding dimension
    int context_vectors_m = 16;
    double temperature = 1.0;
    bool losses_as_printed = false;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline void validate(const RunConfig& c) {
    auto bad = [](const std::string& m) { throw Error(ErrorCode::BadConfig, "embed_io", m); };
    if (c.knn_k < 1) bad("knn_k must be >= 1");
    if (c.gcn_layers < 0 || c.gcn_layers > 3) bad("gcn_layers must be in {0,1,2,3}");
    if (!(c.margin_alpha >= 0.0 && c.margin_alpha <= 1.0)) bad("margin_alpha must be in [0,1]");
    if (!(c.temperature > 0.0) || !std::isfinite(c.temperature)) bad("temperature must be > 0");
    if (!(c.learn_rate > 0.0) || !std::isfinite(c.learn_rate)) bad("learn_rate must be > 0");
    if (c.batch_size < 1) bad("batch_size must be >= 1");
    if (c.epochs < 0) bad("epochs must be >= 0");
    if (c.hidden_dim < 0) bad("hidden_dim must be >= 0");
    if (c.context_vectors_m < 0) bad("context_vectors_m must be >= 0");
}

/// Config checks that need the data: the kNN rule needs k < |C_kwn|.
inline void validate(const RunConfig& c, int known_class_count) {
    validate(c);
    if (c.knn_k >= known_class_count) {
        throw Error(ErrorCode::BadConfig, "embed_io",
                    "knn_k = " + std::to_string(c.knn_k) + " must be < known class count " +
                        std::to_string(known_class_count));
    }
}

namespace detail {

/// Shortest text that parses back to the same double.
inline std::string shortest(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

} // namespace detail

inline std::string format_config(const RunConfig& c) {
    std::ostringstream os;
    os << "knn_k=" << c.knn_k << '\n'
       << "gcn_layers=" << c.gcn_layers << '\n'
       << "margin_alpha=" << detail::shortest(c.margin_alpha) << '\n'
       << "learn_rate=" << detail::shortest(c.learn_rate) << '\n'
       << "batch_size=" << c.batch_size << '\n'
       << "epochs=" << c.epochs << '\n'
       << "seed=" << c.seed << '\n'
       << "hidden_dim=" << c.hidden_dim << '\n'
       << "context_vectors_m=" << c.context_vectors_m << '\n'
       << "temperature=" << detail::shortest(c.temperature) << '\n'
       << "losses_as_printed=" << (c.losses_as_printed ? 1 : 0) << '\n';
    return os.str();
}

namespace detail {

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
    std::istringstream is(text);
    T v{};
    is >> v;
    if (!is || !(is >> std::ws).eof()) {
        throw Error(ErrorCode::BadConfig, "embed_io", "cannot parse value '" + text + "' for key " + key);
    }
    return v;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace detail

/// Parse key=value lines; '#' starts a comment. Unknown keys are rejected.
/// Keys not present keep the values from `base`.
inline RunConfig parse_config(const std::string& text, RunConfig base = {}) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::BadConfig, "embed_io", "line " + std::to_string(lineno) + ": expected key=value");
        }
        const auto key = detail::trim(line.substr(0, eq));
        const auto val = detail::trim(line.substr(eq + 1));
        using detail::parse_value;
        if (key == "knn_k") base.knn_k = parse_value<int>(key, val);
        else if (key == "gcn_layers") base.gcn_layers = parse_value<int>(key, val);
        else if (key == "margin_alpha") base.margin_alpha = parse_value<double>(key, val);
        else if (key == "learn_rate") base.learn_rate = parse_value<double>(key, val);
        else if (key == "batch_size") base.batch_size = parse_value<int>(key, val);
        else if (key == "epochs") base.epochs = parse_value<int>(key, val);
        else if (key == "seed") base.seed = parse_value<std::uint64_t>(key, val);
        else if (key == "hidden_dim") base.hidden_dim = parse_value<int>(key, val);
        else if (key == "context_vectors_m") base.context_vectors_m = parse_value<int>(key, val);
        else if (key == "temperature") base.temperature = parse_value<double>(key, val);
        else if (key == "losses_as_printed") base.losses_as_printed = parse_value<int>(key, val) != 0;
        else throw Error(ErrorCode::BadConfig, "embed_io", "line " + std::to_string(lineno) + ": unknown key " + key);
    }
    return base;
}

inline RunConfig read_config_file(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path, "embed_io");
    return parse_config(std::string(bytes.begin(), bytes.end()));
}

inline void write_config_file(const RunConfig& c, const std::filesystem::path& path) {
    detail::write_text_file(path, format_config(c), "embed_io");
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace detail {

/// 0..n-1 in Fisher-Yates order.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

} // namespace detail

struct SyntheticData {
    EmbeddingSet labeled;
    EmbeddingSet unlabeled; // labels hold the ground truth for scoring
    EmbeddingSet class_embeddings;
};

/// Class centers may not be closer than 60 degrees to each other.
inline constexpr double kMaxCenterCosine = 0.5;
inline constexpr int kCenterAttempts = 10000;

/// Unit-sphere class centers, noisy unit-norm samples around them, and one
/// noisy copy of each known center standing in for its text embedding.
/// Labeled rows cover the known classes only; unlabeled rows cover all
/// classes in shuffled order. Pure function of its arguments.
inline SyntheticData generate_synthetic(int class_count, int known_count, int per_class, int d, double separation,
                                        std::uint64_t seed) {
    if (class_count < 1 || known_count < 1 || known_count > class_count) {
        throw Error(ErrorCode::InvalidArgument, "embed_io", "need 1 <= known_count <= class_count");
    }
    if (per_class < 2) throw Error(ErrorCode::InvalidArgument, "embed_io", "per_class must be >= 2");
    if (d < 1) throw Error(ErrorCode::InvalidArgument, "embed_io", "dimension must be >= 1");
    if (!(separation > 0.0) || !std::isfinite(separation)) {
        throw Error(ErrorCode::InvalidArgument, "embed_io", "separation must be > 0");
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto ud = static_cast<std::size_t>(d);

    auto unit_normal = [&] {
        std::vector<double> v(ud);
        double n2 = 0.0;
        do {
            n2 = 0.0;
            for (auto& x : v) {
                x = gauss(rng);
                n2 += x * x;
            }
        } while (n2 == 0.0);
        const double n = std::sqrt(n2);
        for (auto& x : v) x /= n;
        return v;
    };

    std::vector<std::vector<double>> centers;
    for (int c = 0; c < class_count; ++c) {
        bool placed = false;
        for (int attempt = 0; attempt < kCenterAttempts && !placed; ++attempt) {
            auto v = unit_normal();
            bool ok = true;
            for (const auto& other : centers) {
                if (dot(std::span<const double>(v), std::span<const double>(other)) > kMaxCenterCosine) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                centers.push_back(std::move(v));
                placed = true;
            }
        }
        if (!placed) {
            throw Error(ErrorCode::Infeasible, "embed_io",
                        "could not place class center " + std::to_string(c) + " with pairwise angle >= 60 degrees in " +
                            std::to_string(d) + " dimensions after " + std::to_string(kCenterAttempts) + " attempts");
        }
    }

    const double noise = 1.0 / separation;
    auto noisy_row = [&](int c, std::span<float> out) {
        std::vector<double> v(ud);
        double n2 = 0.0;
        for (std::size_t j = 0; j < ud; ++j) {
            v[j] = centers[static_cast<std::size_t>(c)][j] + noise * gauss(rng);
            n2 += v[j] * v[j];
        }
        const double n = std::sqrt(n2);
        for (std::size_t j = 0; j < ud; ++j) out[j] = static_cast<float>(v[j] / n);
    };

    auto names = [](int count) {
        std::vector<std::string> out;
        for (int c = 0; c < count; ++c) out.push_back("class_" + std::to_string(c));
        return out;
    };

    SyntheticData out;
    const auto pc = static_cast<std::size_t>(per_class);

    out.labeled.data = Matrix<float>(static_cast<std::size_t>(known_count) * pc, ud);
    out.labeled.labels.emplace();
    for (int c = 0; c < known_count; ++c) {
        for (std::size_t i = 0; i < pc; ++i) {
            noisy_row(c, out.labeled.data.row(static_cast<std::size_t>(c) * pc + i));
            out.labeled.labels->push_back(c);
        }
    }

    Matrix<float> unl(static_cast<std::size_t>(class_count) * pc, ud);
    std::vector<std::int32_t> unl_labels;
    for (int c = 0; c < class_count; ++c) {
        for (std::size_t i = 0; i < pc; ++i) {
            noisy_row(c, unl.row(static_cast<std::size_t>(c) * pc + i));
            unl_labels.push_back(c);
        }
    }

    out.class_embeddings.data = Matrix<float>(static_cast<std::size_t>(known_count), ud);
    out.class_embeddings.labels.emplace();
    for (int c = 0; c < known_count; ++c) {
        noisy_row(c, out.class_embeddings.data.row(static_cast<std::size_t>(c)));
        out.class_embeddings.labels->push_back(c);
    }

    const auto order = detail::shuffled_indices(unl.rows(), rng);
    out.unlabeled.data = select_rows(unl, order);
    out.unlabeled.labels.emplace();
    for (auto i : order) out.unlabeled.labels->push_back(unl_labels[i]);

    for (auto* s : {&out.labeled, &out.unlabeled, &out.class_embeddings}) {
        s->known_class_count = known_count;
    }
    out.labeled.class_names = names(class_count);
    out.unlabeled.class_names = names(class_count);
    out.class_embeddings.class_names = names(known_count);
    return out;
}

} // namespace graphvl
