#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "graphvl/binary_io.hpp"
#include "graphvl/embed_io.hpp"
#include "graphvl/error.hpp"
#include "graphvl/losses.hpp"
#include "graphvl/matrix.hpp"
#include "graphvl/neural_core.hpp"
#include "graphvl/semantic_graph.hpp"

namespace graphvl {

struct LossRecord {
    float l_cma = 0.f;
    float l_sdp = 0.f;
    float l_cs = 0.f;
    float l_tot = 0.f;

    friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct TrainState {
    RunConfig config;
    ModelParams<float> params;
    int epoch = 0;
    std::mt19937_64 rng;
    std::vector<LossRecord> trace;  // one record per finished epoch

    friend bool operator==(const TrainState&, const TrainState&) = default;
};

inline ModelShape model_shape(const RunConfig& c, std::size_t dim, std::size_t classes) {
    ModelShape s;
    s.input_dim = dim;
    s.hidden_dim = c.hidden_dim > 0 ? static_cast<std::size_t>(c.hidden_dim) : dim;
    s.output_dim = dim;
    s.classes = classes;
    s.gcn_layers = c.gcn_layers;
    return s;
}

/// hidden_dim = 0 means "same as the embedding dimension".
inline RunConfig resolve_config(RunConfig c, std::size_t dim) {
    if (c.hidden_dim == 0) c.hidden_dim = static_cast<int>(dim);
    return c;
}

namespace detail {

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

template <typename T>
std::uint64_t checksum(const Matrix<T>& m, std::uint64_t h = 1469598103934665603ull) {
    return fnv1a(m.values().data(), m.size() * sizeof(T), h);
}

inline void check_training_inputs(const EmbeddingSet& labeled, const EmbeddingSet& class_embeddings,
                                  const RunConfig& config) {
    validate(class_embeddings);
    const int known = static_cast<int>(class_embeddings.size());
    validate(config, known);
    validate_labeled_split(labeled, known);
    if (labeled.dim() != class_embeddings.dim()) {
        throw Error(ErrorCode::ShapeMismatch, "trainer",
                    "labeled dimension " + std::to_string(labeled.dim()) + " differs from class embedding dimension " +
                        std::to_string(class_embeddings.dim()));
    }
}

} // namespace detail

/// Fresh state: parameters drawn from a generator seeded with config.seed,
/// which then drives batch order and triplet sampling.
inline TrainState init_train_state(const EmbeddingSet& labeled, const EmbeddingSet& class_embeddings,
                                   const RunConfig& config) {
    detail::check_training_inputs(labeled, class_embeddings, config);
    TrainState s;
    s.config = resolve_config(config, class_embeddings.dim());
    s.rng.seed(config.seed);
    s.params = init_params<float>(model_shape(s.config, class_embeddings.dim(), class_embeddings.size()), s.rng);
    return s;
}

/// Run epochs until `until_epoch` (default: config.epochs). The graph is built
/// once from the class embeddings and stays fixed.
inline void continue_training(TrainState& state, const EmbeddingSet& labeled, const EmbeddingSet& class_embeddings,
                              int until_epoch = -1) {
    const RunConfig& cfg = state.config;
    detail::check_training_inputs(labeled, class_embeddings, cfg);
    if (until_epoch < 0) until_epoch = cfg.epochs;
    if (until_epoch > cfg.epochs) {
        throw Error(ErrorCode::InvalidArgument, "trainer", "cannot train past config.epochs");
    }
    if (state.params.class_count() != class_embeddings.size() || state.params.input_dim() != class_embeddings.dim()) {
        throw Error(ErrorCode::ShapeMismatch, "trainer", "checkpoint shape does not match the class embeddings");
    }

    const SemanticGraph graph = build_knn_graph(class_embeddings.data, cfg.knn_k);
    const Matrix<float>& h0 = class_embeddings.data;
    const auto fingerprint = [&] {
        return detail::checksum(h0, detail::checksum(graph.norm_adjacency, detail::checksum(graph.adjacency)));
    };
    const auto before = fingerprint();

    const LossOptions opt{cfg.margin_alpha, cfg.temperature, cfg.losses_as_printed};
    const std::size_t n = labeled.size();
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    const auto& labels = *labeled.labels;

    while (state.epoch < until_epoch) {
        const auto order = detail::shuffled_indices(n, state.rng);

        double sum_cma = 0.0, sum_sdp = 0.0, sum_cs = 0.0, sum_tot = 0.0;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t stop = std::min(n, start + bs);
            const std::span<const std::size_t> idx(order.data() + start, stop - start);

            Batch<float> batch;
            batch.y_idx.reserve(idx.size());
            for (auto i : idx) batch.y_idx.push_back(labels[i]);
            auto gcn = gcn_forward(graph, h0, state.params.weights);
            auto proj = projector_forward(select_rows(labeled.data, idx), state.params.weights);
            batch.z = proj.z;
            batch.ybar = gcn.ybar;
            batch.t = state.params.weights.prompts;

            const auto triplets = sample_triplets(std::span<const int>(batch.y_idx), state.rng);
            const auto loss = loss_total(batch, std::span<const Triplet>(triplets), opt);
            if (!std::isfinite(loss.total)) {
                throw Error(ErrorCode::NumericFailure, "trainer",
                            "loss became non-finite in epoch " + std::to_string(state.epoch));
            }

            Weights<float> grads = state.params.weights.zeros_like();
            auto gg = gcn_backward(gcn.trace, state.params.weights, loss.grad_ybar);
            grads.gcn = std::move(gg.weights);
            auto pg = projector_backward(proj.trace, state.params.weights, loss.grad_z);
            grads.proj_w1 = std::move(pg.w1);
            grads.proj_b1 = std::move(pg.b1);
            grads.proj_w2 = std::move(pg.w2);
            grads.proj_b2 = std::move(pg.b2);
            grads.prompts = loss.grad_t;
            adam_step(state.params, grads, cfg.learn_rate);

            const double w = static_cast<double>(idx.size());
            sum_cma += loss.cma * w;
            sum_sdp += loss.sdp * w;
            sum_cs += loss.cs * w;
            sum_tot += loss.total * w;
        }
        const double inv = n ? 1.0 / static_cast<double>(n) : 0.0;
        state.trace.push_back({static_cast<float>(sum_cma * inv), static_cast<float>(sum_sdp * inv),
                               static_cast<float>(sum_cs * inv), static_cast<float>(sum_tot * inv)});
        ++state.epoch;
    }

    if (fingerprint() != before) {
        throw Error(ErrorCode::InvariantViolation, "trainer", "semantic graph or h0 changed during training");
    }
}

inline TrainState train(const EmbeddingSet& labeled, const EmbeddingSet& class_embeddings, const RunConfig& config) {
    TrainState s = init_train_state(labeled, class_embeddings, config);
    continue_training(s, labeled, class_embeddings);
    return s;
}

inline std::string loss_trace_csv(const TrainState& s) {
    std::ostringstream os;
    os << "epoch,l_cma,l_sdp,l_cs,l_tot\n" << std::setprecision(9);
    for (std::size_t e = 0; e < s.trace.size(); ++e) {
        const auto& r = s.trace[e];
        os << e << ',' << r.l_cma << ',' << r.l_sdp << ',' << r.l_cs << ',' << r.l_tot << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// GVLP checkpoint, little-endian:
//   "GVLP" | version u32 | config (u32 len + key=value text) | epoch u32 |
//   adam_step u64 | rng state (u32 len + text) | tensor_count u32 |
//   per tensor: name (u32 len + bytes) | rank u32 | dims u32 × rank | f32 payload
// Tensors: the weights, "adam.m.<name>", "adam.v.<name>", and "trace" [epochs × 4].

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<unsigned char> encode_checkpoint(const TrainState& s) {
    detail::ByteWriter w;
    w.put_bytes("GVLP", 4);
    w.put(kCheckpointVersion);
    w.put_string(format_config(s.config));
    w.put(static_cast<std::uint32_t>(s.epoch));
    w.put(static_cast<std::uint64_t>(s.params.adam.step));
    std::ostringstream rng_text;
    rng_text << s.rng;
    w.put_string(rng_text.str());

    std::vector<std::pair<std::string, const Matrix<float>*>> tensors;
    s.params.weights.for_each([&](const std::string& name, const Matrix<float>& m) { tensors.emplace_back(name, &m); });
    s.params.adam.m.for_each(
        [&](const std::string& name, const Matrix<float>& m) { tensors.emplace_back("adam.m." + name, &m); });
    s.params.adam.v.for_each(
        [&](const std::string& name, const Matrix<float>& m) { tensors.emplace_back("adam.v." + name, &m); });
    Matrix<float> trace(s.trace.size(), 4);
    for (std::size_t e = 0; e < s.trace.size(); ++e) {
        trace(e, 0) = s.trace[e].l_cma;
        trace(e, 1) = s.trace[e].l_sdp;
        trace(e, 2) = s.trace[e].l_cs;
        trace(e, 3) = s.trace[e].l_tot;
    }
    tensors.emplace_back("trace", &trace);

    w.put(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        w.put_string(name);
        w.put(static_cast<std::uint32_t>(2));
        w.put(static_cast<std::uint32_t>(m->rows()));
        w.put(static_cast<std::uint32_t>(m->cols()));
        for (float v : m->values()) w.put(v);
    }
    return w.bytes();
}

inline TrainState decode_checkpoint(std::vector<unsigned char> bytes) {
    detail::ByteReader r(std::move(bytes), "trainer");
    if (r.remaining() < 4 || r.get_bytes(4, "magic") != "GVLP") {
        throw Error(ErrorCode::BadMagic, "trainer", "expected magic \"GVLP\" at offset 0");
    }
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw Error(ErrorCode::InvalidArgument, "trainer", "unsupported checkpoint version " + std::to_string(version));
    }
    TrainState s;
    s.config = parse_config(r.get_string("config"));
    s.epoch = static_cast<int>(r.get<std::uint32_t>("epoch"));
    s.params.adam.step = r.get<std::uint64_t>("adam step");
    {
        const auto off = r.offset();
        std::istringstream is(r.get_string("rng state"));
        is >> s.rng;
        if (!is) {
            throw Error(ErrorCode::InvalidArgument, "trainer", "corrupt rng state at offset " + std::to_string(off));
        }
    }

    std::map<std::string, Matrix<float>> tensors;
    const auto count = r.get<std::uint32_t>("tensor count");
    for (std::uint32_t t = 0; t < count; ++t) {
        auto name = r.get_string("tensor name");
        const auto rank = r.get<std::uint32_t>("tensor rank");
        if (rank > 8) throw Error(ErrorCode::InvalidArgument, "trainer", "tensor " + name + " has rank " + std::to_string(rank));
        std::vector<std::uint32_t> dims(rank);
        for (auto& d : dims) d = r.get<std::uint32_t>("tensor dims");
        std::uint64_t elems = 1;
        for (auto d : dims) {
            if (d != 0 && elems > r.remaining() / d) {
                r.need(r.remaining() + 1, ("payload of tensor " + name).c_str());
            }
            elems *= d;
        }
        r.need(elems * sizeof(float), ("payload of tensor " + name).c_str());
        const std::size_t rows = rank == 0 ? 1 : dims[0];
        std::size_t cols = 1;
        for (std::uint32_t k = 1; k < rank; ++k) cols *= dims[k];
        Matrix<float> m(rows, cols);
        for (auto& v : m.values()) v = r.get<float>("tensor payload");
        if (!tensors.emplace(name, std::move(m)).second) {
            throw Error(ErrorCode::InvalidArgument, "trainer", "duplicate tensor " + name);
        }
    }
    r.expect_end();

    auto take = [&](const std::string& name) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw Error(ErrorCode::InvalidArgument, "trainer", "checkpoint lacks tensor " + name);
        auto m = std::move(it->second);
        tensors.erase(it);
        return m;
    };
    auto fill = [&](Weights<float>& w, const std::string& prefix) {
        for (int l = 0; l < s.config.gcn_layers; ++l) w.gcn.push_back(take(prefix + "gcn.W" + std::to_string(l)));
        w.proj_w1 = take(prefix + "proj.W1");
        w.proj_b1 = take(prefix + "proj.b1");
        w.proj_w2 = take(prefix + "proj.W2");
        w.proj_b2 = take(prefix + "proj.b2");
        w.prompts = take(prefix + "prompt.t");
    };
    fill(s.params.weights, "");
    fill(s.params.adam.m, "adam.m.");
    fill(s.params.adam.v, "adam.v.");
    const auto trace = take("trace");
    if (!tensors.empty()) {
        throw Error(ErrorCode::InvalidArgument, "trainer", "unexpected tensor " + tensors.begin()->first);
    }
    if (trace.cols() != 4 || trace.rows() != static_cast<std::size_t>(s.epoch)) {
        throw Error(ErrorCode::InvalidArgument, "trainer", "trace rows must equal the epoch count");
    }
    for (std::size_t e = 0; e < trace.rows(); ++e) s.trace.push_back({trace(e, 0), trace(e, 1), trace(e, 2), trace(e, 3)});

    // Shapes must chain: d → hidden → d_out for the projector, d → … → d_out for the GCN.
    const auto& w = s.params.weights;
    bool ok = w.proj_b1.rows() == 1 && w.proj_b1.cols() == w.proj_w1.cols() && w.proj_w2.rows() == w.proj_w1.cols() &&
              w.proj_b2.rows() == 1 && w.proj_b2.cols() == w.proj_w2.cols() && w.prompts.cols() == w.proj_w2.cols();
    std::size_t width = w.proj_w1.rows();
    for (const auto& g : w.gcn) {
        ok = ok && g.rows() == width;
        width = g.cols();
    }
    ok = ok && width == w.proj_w2.cols();
    for (const Weights<float>* other : {&s.params.adam.m, &s.params.adam.v}) {
        std::vector<std::pair<std::size_t, std::size_t>> a, b;
        w.for_each([&](const std::string&, const Matrix<float>& m) { a.emplace_back(m.rows(), m.cols()); });
        other->for_each([&](const std::string&, const Matrix<float>& m) { b.emplace_back(m.rows(), m.cols()); });
        ok = ok && a == b;
    }
    if (!ok) throw Error(ErrorCode::ShapeMismatch, "trainer", "checkpoint tensor shapes do not chain");
    w.for_each([](const std::string& name, const Matrix<float>& m) {
        if (!all_finite(m)) throw Error(ErrorCode::NonFiniteValue, "trainer", "tensor " + name + " is not finite");
    });
    return s;
}

inline void save_checkpoint(const TrainState& s, const std::filesystem::path& path) {
    detail::write_file_bytes(path, encode_checkpoint(s), "trainer");
}

inline TrainState load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(detail::read_file_bytes(path, "trainer"));
}

} // namespace graphvl
