// graphvl: command-line front end for the category discovery pipeline.
//
//   graphvl gen-synthetic --out-dir data --classes 10 --known 5
//   graphvl run-all --labeled data/labeled.gvle --unlabeled data/unlabeled.gvle
//                   --class-emb data/class_emb.gvle --out-dir run
//
// Exit codes: 0 ok, 2 bad input, 3 numeric failure, 4 invariant violation.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "graphvl/graphvl.hpp"

namespace fs = std::filesystem;
using namespace graphvl;

namespace {

struct ConfigFlags {
    std::string config_file;
    std::optional<int> knn_k, gcn_layers, batch_size, epochs, hidden_dim, context_vectors_m;
    std::optional<double> margin_alpha, temperature, lr;
    std::optional<std::uint64_t> seed;
    bool losses_as_printed = false;

    void attach(CLI::App* app) {
        app->add_option("--config", config_file, "key=value config file; flags override it");
        app->add_option("--seed", seed, "seed for every random draw");
        app->add_option("--knn-k", knn_k, "neighbours per class node");
        app->add_option("--gcn-layers", gcn_layers, "GCN depth (0-3)");
        app->add_option("--margin-alpha", margin_alpha, "margin in the alignment loss");
        app->add_option("--temperature", temperature, "softmax temperature in the alignment loss");
        app->add_option("--lr", lr, "Adam learning rate");
        app->add_option("--batch-size", batch_size, "minibatch size");
        app->add_option("--epochs", epochs, "training epochs");
        app->add_option("--hidden-dim", hidden_dim, "projector hidden width (0 = embedding dim)");
        app->add_option("--context-vectors-m", context_vectors_m, "prompt context vector count");
        app->add_flag("--losses-as-printed", losses_as_printed, "use the literal sign conventions of the loss formulas");
    }

    RunConfig resolve() const {
        RunConfig c = config_file.empty() ? RunConfig{} : read_config_file(config_file);
        if (seed) c.seed = *seed;
        if (knn_k) c.knn_k = *knn_k;
        if (gcn_layers) c.gcn_layers = *gcn_layers;
        if (margin_alpha) c.margin_alpha = *margin_alpha;
        if (temperature) c.temperature = *temperature;
        if (lr) c.learn_rate = *lr;
        if (batch_size) c.batch_size = *batch_size;
        if (epochs) c.epochs = *epochs;
        if (hidden_dim) c.hidden_dim = *hidden_dim;
        if (context_vectors_m) c.context_vectors_m = *context_vectors_m;
        if (losses_as_printed) c.losses_as_printed = true;
        validate(c);
        return c;
    }
};

struct SyntheticFlags {
    int classes = 10;
    int known = 5;
    int per_class = 100;
    int dim = 32;
    double separation = 6.0;

    void attach(CLI::App* app) {
        app->add_option("--classes", classes, "total class count");
        app->add_option("--known", known, "known (labeled) class count");
        app->add_option("--per-class", per_class, "samples per class");
        app->add_option("--dim", dim, "embedding dimension");
        app->add_option("--separation", separation, "inverse noise scale");
    }

    std::string echo() const {
        return "classes=" + std::to_string(classes) + "\nknown=" + std::to_string(known) +
               "\nper_class=" + std::to_string(per_class) + "\ndim=" + std::to_string(dim) +
               "\nseparation=" + std::to_string(separation) + "\n";
    }
};

struct ClusterFlags {
    int k_total = 0;
    bool estimate_k = false;
    int k_min = 0;
    int k_max = 0;

    void attach(CLI::App* app) {
        app->add_option("--k-total", k_total, "cluster count (default: classes in the unlabeled ground truth)");
        app->add_flag("--estimate-k", estimate_k, "choose the cluster count by the elbow method");
        app->add_option("--k-min", k_min, "elbow scan lower bound (default: known class count)");
        app->add_option("--k-max", k_max, "elbow scan upper bound (default: 4 x known class count)");
    }

    PipelineOptions options(const RunConfig& c, bool dump_graph) const {
        PipelineOptions o;
        o.config = c;
        o.k_total = k_total;
        o.estimate_k = estimate_k;
        o.k_min = k_min;
        o.k_max = k_max;
        o.dump_graph = dump_graph;
        return o;
    }
};

void echo_config(const RunConfig& c, const fs::path& out_dir) {
    std::cout << "# resolved config\n" << format_config(c);
    fs::create_directories(out_dir);
    write_config_file(c, out_dir / "config.txt");
}

void print_report(const EvalReport& r, int k) {
    std::cout << "k=" << k << '\n' << report_text(r);
}

EmbeddingSet load(const std::string& path, const char* what) {
    if (path.empty()) throw Error(ErrorCode::InvalidArgument, "cli", std::string("missing --") + what);
    if (!fs::exists(path)) throw Error(ErrorCode::FileNotFound, "cli", std::string(what) + " file not found: " + path);
    return read_embedding_file(path);
}

/// Labeled files don't carry the known class count; the class embedding rows define it.
void tag_known(EmbeddingSet& s, const EmbeddingSet& class_emb) {
    s.known_class_count = static_cast<int>(class_emb.size());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-regularized vision-language category discovery"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker thread cap; results do not depend on it")->check(CLI::PositiveNumber);

    std::string labeled_path, unlabeled_path, class_emb_path, out_dir = ".", checkpoint_path, assignments_path, resume_path;
    bool dump_graph = false;
    bool synthetic = false;
    std::uint64_t gen_seed = 0;
    int eval_known = 0;
    ConfigFlags cfg_train, cfg_all;
    SyntheticFlags syn_gen, syn_all;
    ClusterFlags cl_cluster, cl_estimate, cl_all;

    auto* gen = app.add_subcommand("gen-synthetic", "write labeled/unlabeled/class embedding files from synthetic classes");
    syn_gen.attach(gen);
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out-dir", out_dir, "output directory");

    auto* trn = app.add_subcommand("train", "train the GCN, projector and prompts on the labeled split");
    trn->add_option("--labeled", labeled_path, "labeled GVLE file")->required();
    trn->add_option("--class-emb", class_emb_path, "class embedding GVLE file")->required();
    trn->add_option("--out-dir", out_dir, "output directory");
    trn->add_option("--resume", resume_path, "continue from a GVLP checkpoint");
    trn->add_flag("--dump-graph", dump_graph, "write the kNN adjacency as graph.csv");
    cfg_train.attach(trn);

    auto* clu = app.add_subcommand("cluster", "cluster labeled + unlabeled samples with a trained model");
    clu->add_option("--checkpoint", checkpoint_path, "GVLP checkpoint")->required();
    clu->add_option("--labeled", labeled_path, "labeled GVLE file")->required();
    clu->add_option("--unlabeled", unlabeled_path, "unlabeled GVLE file")->required();
    clu->add_option("--class-emb", class_emb_path, "class embedding GVLE file")->required();
    clu->add_option("--out-dir", out_dir, "output directory");
    cl_cluster.attach(clu);

    auto* evl = app.add_subcommand("eval", "score an assignments CSV against unlabeled ground truth");
    evl->add_option("--assignments", assignments_path, "assignments.csv from cluster or run-all")->required();
    evl->add_option("--unlabeled", unlabeled_path, "unlabeled GVLE file with ground truth")->required();
    evl->add_option("--known", eval_known, "known class count")->required();
    evl->add_option("--out-dir", out_dir, "output directory");

    auto* est = app.add_subcommand("estimate-k", "estimate the cluster count by the elbow of inertia(K)");
    est->add_option("--checkpoint", checkpoint_path, "GVLP checkpoint")->required();
    est->add_option("--labeled", labeled_path, "labeled GVLE file")->required();
    est->add_option("--unlabeled", unlabeled_path, "unlabeled GVLE file")->required();
    est->add_option("--class-emb", class_emb_path, "class embedding GVLE file")->required();
    est->add_option("--out-dir", out_dir, "output directory");
    cl_estimate.attach(est);

    auto* all = app.add_subcommand("run-all", "train, cluster and evaluate end to end");
    all->add_option("--labeled", labeled_path, "labeled GVLE file");
    all->add_option("--unlabeled", unlabeled_path, "unlabeled GVLE file");
    all->add_option("--class-emb", class_emb_path, "class embedding GVLE file");
    all->add_option("--out-dir", out_dir, "output directory");
    all->add_flag("--synthetic", synthetic, "generate the inputs instead of reading them");
    all->add_flag("--dump-graph", dump_graph, "write the kNN adjacency as graph.csv");
    cfg_all.attach(all);
    syn_all.attach(all);
    cl_all.attach(all);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    set_thread_limit(threads);

    try {
        if (*gen) {
            std::cout << "# synthetic data\n" << syn_gen.echo() << "seed=" << gen_seed << '\n';
            const auto data = generate_synthetic(syn_gen.classes, syn_gen.known, syn_gen.per_class, syn_gen.dim,
                                                 syn_gen.separation, gen_seed);
            fs::create_directories(out_dir);
            write_embedding_file(data.labeled, fs::path(out_dir) / "labeled.gvle");
            write_embedding_file(data.unlabeled, fs::path(out_dir) / "unlabeled.gvle");
            write_embedding_file(data.class_embeddings, fs::path(out_dir) / "class_emb.gvle");
            return 0;
        }

        if (*trn) {
            auto labeled = load(labeled_path, "labeled");
            const auto class_emb = load(class_emb_path, "class-emb");
            tag_known(labeled, class_emb);
            TrainState state;
            if (!resume_path.empty()) {
                state = load_checkpoint(resume_path);
                if (cfg_train.epochs) state.config.epochs = *cfg_train.epochs;
            } else {
                state = init_train_state(labeled, class_emb, cfg_train.resolve());
            }
            echo_config(state.config, out_dir);
            continue_training(state, labeled, class_emb);
            save_checkpoint(state, fs::path(out_dir) / "checkpoint.gvlp");
            detail::write_text_file(fs::path(out_dir) / "loss_trace.csv", loss_trace_csv(state), "cli");
            if (dump_graph) {
                detail::write_text_file(fs::path(out_dir) / "graph.csv",
                                        adjacency_csv(build_knn_graph(class_emb.data, state.config.knn_k)), "cli");
            }
            if (!state.trace.empty()) {
                std::cout << "epochs=" << state.epoch << " l_tot first=" << state.trace.front().l_tot
                          << " last=" << state.trace.back().l_tot << '\n';
            }
            return 0;
        }

        if (*clu || *est) {
            const auto& flags = *clu ? cl_cluster : cl_estimate;
            const auto state = load_checkpoint(checkpoint_path);
            const auto labeled = load(labeled_path, "labeled");
            const auto unlabeled = load(unlabeled_path, "unlabeled");
            const auto class_emb = load(class_emb_path, "class-emb");
            echo_config(state.config, out_dir);
            auto opt = flags.options(state.config, false);
            if (*est) opt.estimate_k = true;
            const auto out = cluster_with_model(state, labeled, unlabeled, class_emb, opt);
            if (out.elbow) {
                detail::write_text_file(fs::path(out_dir) / "inertia.csv", inertia_csv(*out.elbow), "cli");
            }
            std::cout << "k=" << out.k << '\n';
            if (*clu) {
                detail::write_text_file(fs::path(out_dir) / "assignments.csv", assignments_csv(out.clusters), "cli");
                if (unlabeled.labels) {
                    print_report(evaluate_unlabeled(out.clusters, labeled.size(), unlabeled,
                                                    static_cast<int>(class_emb.size()), out.k),
                                 out.k);
                }
            }
            return 0;
        }

        if (*evl) {
            const auto unlabeled = load(unlabeled_path, "unlabeled");
            std::ifstream in(assignments_path);
            if (!in) throw Error(ErrorCode::FileNotFound, "cli", "assignments file not found: " + assignments_path);
            std::string line;
            std::getline(in, line);
            if (line != "sample_index,cluster_id,is_constrained") {
                throw Error(ErrorCode::InvalidArgument, "cli", "unexpected assignments header: " + line);
            }
            ClusterAssignment clusters;
            std::size_t constrained = 0;
            int k = 0;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                std::istringstream row(line);
                long long idx = 0;
                int cluster = 0, is_constrained = 0;
                char c1 = 0, c2 = 0;
                row >> idx >> c1 >> cluster >> c2 >> is_constrained;
                if (!row || c1 != ',' || c2 != ',' || idx != static_cast<long long>(clusters.assignment.size())) {
                    throw Error(ErrorCode::InvalidArgument, "cli", "malformed assignments row: " + line);
                }
                if (is_constrained) {
                    if (constrained != clusters.assignment.size()) {
                        throw Error(ErrorCode::InvalidArgument, "cli", "constrained rows must precede unlabeled rows");
                    }
                    ++constrained;
                }
                clusters.assignment.push_back(cluster);
                clusters.constrained_mask.push_back(is_constrained != 0);
                k = std::max(k, cluster + 1);
            }
            if (clusters.assignment.size() != constrained + unlabeled.size()) {
                throw Error(ErrorCode::ShapeMismatch, "cli", "assignments do not cover the unlabeled set");
            }
            const auto report = evaluate_unlabeled(clusters, constrained, unlabeled, eval_known, k);
            print_report(report, k);
            fs::create_directories(out_dir);
            detail::write_text_file(fs::path(out_dir) / "report.txt", "k=" + std::to_string(k) + "\n" + report_text(report), "cli");
            detail::write_text_file(fs::path(out_dir) / "report.csv", report_csv(report), "cli");
            return 0;
        }

        if (*all) {
            EmbeddingSet labeled, unlabeled, class_emb;
            RunConfig cfg = cfg_all.resolve();
            if (synthetic) {
                std::cout << "# synthetic data\n" << syn_all.echo();
                auto data = generate_synthetic(syn_all.classes, syn_all.known, syn_all.per_class, syn_all.dim,
                                               syn_all.separation, cfg.seed);
                labeled = std::move(data.labeled);
                unlabeled = std::move(data.unlabeled);
                class_emb = std::move(data.class_embeddings);
                fs::create_directories(out_dir);
                write_embedding_file(labeled, fs::path(out_dir) / "labeled.gvle");
                write_embedding_file(unlabeled, fs::path(out_dir) / "unlabeled.gvle");
                write_embedding_file(class_emb, fs::path(out_dir) / "class_emb.gvle");
            } else {
                labeled = load(labeled_path, "labeled");
                unlabeled = load(unlabeled_path, "unlabeled");
                class_emb = load(class_emb_path, "class-emb");
            }
            tag_known(labeled, class_emb);
            cfg = resolve_config(cfg, class_emb.dim());
            echo_config(cfg, out_dir);
            const auto opt = cl_all.options(cfg, dump_graph);
            const auto result = run_pipeline(labeled, unlabeled, class_emb, opt);
            write_pipeline_outputs(result, opt, out_dir);
            if (result.report) print_report(*result.report, result.clustering.k);
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
