#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "graphvl/clustering.hpp"
#include "graphvl/embed_io.hpp"
#include "graphvl/evaluation.hpp"
#include "graphvl/semantic_graph.hpp"
#include "graphvl/trainer.hpp"

namespace graphvl {

struct PipelineOptions {
    RunConfig config;
    int k_total = 0;          // 0: number of classes in the unlabeled ground truth
    bool estimate_k = false;  // pick K by the elbow of inertia(K) instead
    int k_min = 0;            // 0: known class count
    int k_max = 0;            // 0: min(n, 4 × known class count)
    bool dump_graph = false;
};

struct ClusteringOutput {
    Matrix<double> features;  // labeled rows first, then unlabeled rows
    std::vector<int> labels;  // -1 for unlabeled rows
    int k = 0;
    std::optional<ElbowResult> elbow;
    ClusterAssignment clusters;
};

struct PipelineResult {
    TrainState state;
    SemanticGraph graph;
    ClusteringOutput clustering;
    std::optional<EvalReport> report;  // present when the unlabeled set carries ground truth
    std::size_t labeled_rows = 0;
};

inline int truth_class_count(const EmbeddingSet& unlabeled) {
    if (!unlabeled.labels) return 0;
    int c = static_cast<int>(unlabeled.class_names.size());
    for (auto l : *unlabeled.labels) c = std::max(c, l + 1);
    return c;
}

/// Q-features for D_S ∪ D_U and constrained clustering over them.
inline ClusteringOutput cluster_with_model(const TrainState& state, const EmbeddingSet& labeled,
                                           const EmbeddingSet& unlabeled, const EmbeddingSet& class_embeddings,
                                           const PipelineOptions& opt) {
    const int known = static_cast<int>(class_embeddings.size());
    validate_labeled_split(labeled, known);
    validate(unlabeled);
    if (unlabeled.dim() != class_embeddings.dim()) {
        throw Error(ErrorCode::ShapeMismatch, "clustering", "unlabeled dimension differs from class embedding dimension");
    }
    const auto graph = build_knn_graph(class_embeddings.data, state.config.knn_k);
    ClusteringOutput out;
    out.features = similarity_features(vstack(labeled.data, unlabeled.data), state.params, graph, class_embeddings.data);
    out.labels.assign(labeled.labels->begin(), labeled.labels->end());
    out.labels.resize(labeled.size() + unlabeled.size(), -1);

    const auto n = static_cast<int>(out.labels.size());
    if (opt.estimate_k) {
        const int k_min = opt.k_min > 0 ? opt.k_min : known;
        const int k_max = opt.k_max > 0 ? opt.k_max : std::min(n, 4 * known);
        out.elbow = estimate_k(out.features, out.labels, k_min, k_max, state.config.seed);
        out.k = out.elbow->k;
    } else {
        out.k = opt.k_total > 0 ? opt.k_total : truth_class_count(unlabeled);
        if (out.k <= 0) {
            throw Error(ErrorCode::InvalidArgument, "clustering",
                        "cluster count unknown: pass --k-total or an unlabeled set with ground truth");
        }
    }
    out.clusters = semisup_kmeans(out.features, out.labels, out.k, state.config.seed, [&](int it, std::span<const int> a, double) {
        for (std::size_t i = 0; i < labeled.size(); ++i) {
            if (a[i] != out.labels[i]) {
                throw Error(ErrorCode::InvariantViolation, "clustering",
                            "labeled sample " + std::to_string(i) + " left its class cluster in iteration " + std::to_string(it));
            }
        }
    });
    return out;
}

/// Score the unlabeled rows of a clustering against their ground truth.
inline EvalReport evaluate_unlabeled(const ClusterAssignment& clusters, std::size_t labeled_rows,
                                     const EmbeddingSet& unlabeled, int known_class_count, int k) {
    if (!unlabeled.labels) throw Error(ErrorCode::InvalidArgument, "evaluation", "unlabeled set has no ground truth");
    const std::span<const int> assignment(clusters.assignment.data() + labeled_rows, unlabeled.size());
    const std::span<const int> truth(unlabeled.labels->data(), unlabeled.labels->size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0) {
            throw Error(ErrorCode::InvalidArgument, "evaluation", "ground truth missing for unlabeled row " + std::to_string(i));
        }
    }
    return split_accuracy(assignment, truth, known_class_count, k, truth_class_count(unlabeled));
}

/// train → Q-features → constrained k-means → Known/New accuracy.
inline PipelineResult run_pipeline(const EmbeddingSet& labeled, const EmbeddingSet& unlabeled,
                                   const EmbeddingSet& class_embeddings, const PipelineOptions& opt) {
    PipelineResult r;
    r.state = train(labeled, class_embeddings, opt.config);
    r.graph = build_knn_graph(class_embeddings.data, r.state.config.knn_k);
    r.clustering = cluster_with_model(r.state, labeled, unlabeled, class_embeddings, opt);
    r.labeled_rows = labeled.size();
    if (unlabeled.labels) {
        r.report = evaluate_unlabeled(r.clustering.clusters, r.labeled_rows, unlabeled,
                                      static_cast<int>(class_embeddings.size()), r.clustering.k);
    }
    return r;
}

/// Plain k-means on raw unlabeled embeddings, scored the same way.
inline EvalReport raw_kmeans_baseline(const EmbeddingSet& unlabeled, int known_class_count, int k, std::uint64_t seed) {
    const auto features = unlabeled.data.cast<double>();
    const std::vector<int> free(unlabeled.size(), -1);
    const auto clusters = semisup_kmeans(features, free, k, seed);
    return evaluate_unlabeled(clusters, 0, unlabeled, known_class_count, k);
}

/// Writes config.txt, checkpoint.gvlp, loss_trace.csv, assignments.csv and,
/// when available, report.txt, report.csv, confusion.csv, inertia.csv and graph.csv.
inline void write_pipeline_outputs(const PipelineResult& r, const PipelineOptions& opt, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_config_file(r.state.config, dir / "config.txt");
    save_checkpoint(r.state, dir / "checkpoint.gvlp");
    detail::write_text_file(dir / "loss_trace.csv", loss_trace_csv(r.state), "cli");
    detail::write_text_file(dir / "assignments.csv", assignments_csv(r.clustering.clusters), "cli");
    if (r.clustering.elbow) detail::write_text_file(dir / "inertia.csv", inertia_csv(*r.clustering.elbow), "cli");
    if (opt.dump_graph) detail::write_text_file(dir / "graph.csv", adjacency_csv(r.graph), "cli");
    if (r.report) {
        detail::write_text_file(dir / "report.txt", "k=" + std::to_string(r.clustering.k) + "\n" + report_text(*r.report), "cli");
        detail::write_text_file(dir / "report.csv", report_csv(*r.report), "cli");
        detail::write_text_file(dir / "confusion.csv", confusion_csv(*r.report), "cli");
    }
}

} // namespace graphvl
