// geoprobe: partition a labeled point set into label-pure, pairwise
// separable clusters, then derive geometric diagnostics and a
// nearest-cluster predictor from the result.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "geoprobe/analysis.hpp"
#include "geoprobe/clustering.hpp"
#include "geoprobe/dataset.hpp"
#include "geoprobe/errors.hpp"
#include "geoprobe/geometry.hpp"
#include "geoprobe/serialize.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitConsistency = 3;
constexpr int kExitKernel = 4;

void write_output(const std::string& path, const std::string& content) {
    if (path.empty()) {
        std::cout << content;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw geoprobe::ParseError("cannot open output file '" + path + "'");
    f << content;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw geoprobe::ParseError("cannot open '" + path + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

struct ProbeArgs {
    std::string train;
    std::string out;
    std::string variant = "basic";
    bool no_cache = false;
    bool normalize = false;
    int noise_min_size = 0;
};

int run_probe(const ProbeArgs& args) {
    auto train = geoprobe::load_dataset(args.train);
    geoprobe::ProbeConfig cfg;
    cfg.variant = args.variant == "fast" ? geoprobe::ProbeConfig::Variant::fast
                                         : geoprobe::ProbeConfig::Variant::basic;
    cfg.caching = !args.no_cache;
    cfg.normalize = args.normalize;
    cfg.noise_min_size = args.noise_min_size;
    geoprobe::prepare_dataset(train, cfg);

    auto t0 = std::chrono::steady_clock::now();
    auto cs = cfg.variant == geoprobe::ProbeConfig::Variant::fast ? geoprobe::direct_probe_fast(train, cfg)
                                                                  : geoprobe::direct_probe(train, cfg);
    auto t1 = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

    write_output(args.out, geoprobe::cluster_set_to_json(cs));

    auto filtered = geoprobe::filter_noise(cs, cfg.noise_min_size);
    std::fprintf(stderr, "clusters=%d labels=%d points=%d removed=%d kernel_calls=%ld runtime_ms=%.3f\n",
                 filtered.set.n_clusters(), train.n_labels(), train.n_points(),
                 static_cast<int>(filtered.removed.size()), cs.stats.kernel_calls, ms);
    return kExitOk;
}

/// Loads a cluster file plus its training data, reapplying the recorded
/// transforms and noise filter so every consumer sees the same view.
struct LoadedRun {
    geoprobe::LabeledDataset train;
    geoprobe::ClusterSet clusters;  // filtered view
};

LoadedRun load_run(const std::string& clusters_path, const std::string& train_path) {
    LoadedRun run;
    run.train = geoprobe::load_dataset(train_path);
    auto cs = geoprobe::cluster_set_from_json(read_file(clusters_path));
    geoprobe::prepare_dataset(run.train, cs.config);
    geoprobe::validate_against(cs, run.train);
    cs.dim = run.train.dim();
    run.clusters = geoprobe::filter_noise(cs, cs.config.noise_min_size).set;
    return run;
}

int run_analyze(const std::string& clusters_path, const std::string& train_path,
                const std::string& out) {
    auto run = load_run(clusters_path, train_path);
    auto lr = geoprobe::linearity_report(run.clusters);
    auto dr = geoprobe::distance_report(run.clusters, run.train);
    write_output(out, geoprobe::analyze_report_to_json(lr, dr, run.clusters.label_names));
    std::fprintf(stderr, "%s min_distance=%s\n", geoprobe::format_linearity(lr).c_str(),
                 geoprobe::jsonw::g12(dr.min_cross_label_distance).c_str());
    return kExitOk;
}

struct PredictArgs {
    std::string clusters;
    std::string train;
    std::string test;
    bool scores = false;
    int difficult = 0;
    int knn = 1;
    int threads = 0;
};

int run_predict(const PredictArgs& args) {
    auto run = load_run(args.clusters, args.train);
    auto test = geoprobe::load_dataset(args.test);
    geoprobe::prepare_dataset(test, run.clusters.config);

    auto batch = geoprobe::intra_accuracy(run.clusters, run.train, test, args.scores, args.threads);
    double knn = geoprobe::knn_accuracy(run.train, test, args.knn, args.threads);

    std::ostringstream os;
    for (const auto& o : batch.outcomes)
        os << geoprobe::outcome_to_json(o, run.clusters.label_names) << "\n";
    if (args.difficult > 0) {
        auto hard = geoprobe::difficult_examples(run.clusters, batch.outcomes, args.difficult);
        for (std::size_t i = 0; i < hard.size(); ++i)
            os << geoprobe::difficult_to_json(hard[i], static_cast<int>(i) + 1,
                                              run.clusters.label_names)
               << "\n";
    }
    std::cout << os.str();
    std::fprintf(stderr, "intra_accuracy=%s knn_accuracy=%s k=%d test_points=%d\n",
                 geoprobe::jsonw::g12(batch.accuracy).c_str(), geoprobe::jsonw::g12(knn).c_str(),
                 args.knn, test.n_points());
    return kExitOk;
}

int run_validate(const std::string& train_path) {
    auto d = geoprobe::load_dataset(train_path);
    auto rep = geoprobe::validate(d);
    std::cout << geoprobe::validation_to_json(rep, d);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Convex-hull probing of labeled point sets"};
    app.require_subcommand(1);

    ProbeArgs probe_args;
    auto* probe = app.add_subcommand("probe", "Cluster a training set under hull separability");
    probe->add_option("--train", probe_args.train, "training TSV")->required();
    probe->add_option("--variant", probe_args.variant, "merge strategy")
        ->check(CLI::IsMember({"basic", "fast"}));
    probe->add_flag("--no-cache", probe_args.no_cache, "disable verdict caching");
    probe->add_option("--noise-min-size", probe_args.noise_min_size, "drop clusters this small or smaller")
        ->check(CLI::NonNegativeNumber);
    probe->add_flag("--normalize", probe_args.normalize, "L2-normalize points after loading");
    probe->add_option("--out", probe_args.out, "cluster JSON output path (default stdout)");

    std::string an_clusters, an_train, an_out;
    auto* analyze = app.add_subcommand("analyze", "Linearity and hull-distance reports");
    analyze->add_option("--clusters", an_clusters, "cluster JSON from probe")->required();
    analyze->add_option("--train", an_train, "training TSV")->required();
    analyze->add_option("--out", an_out, "report JSON output path (default stdout)");

    PredictArgs predict_args;
    auto* predict = app.add_subcommand("predict", "Nearest-cluster prediction on a test set");
    predict->add_option("--clusters", predict_args.clusters, "cluster JSON from probe")->required();
    predict->add_option("--train", predict_args.train, "training TSV")->required();
    predict->add_option("--test", predict_args.test, "test TSV")->required();
    predict->add_flag("--scores", predict_args.scores, "emit softmax label scores");
    predict->add_option("--difficult", predict_args.difficult, "append the N hardest mismatches")
        ->check(CLI::NonNegativeNumber);
    predict->add_option("--knn", predict_args.knn, "k for the kNN baseline")
        ->check(CLI::PositiveNumber);
    predict->add_option("--threads", predict_args.threads, "worker threads (0 = hardware)")
        ->envname("GEOPROBE_THREADS");

    std::string va_train;
    auto* validate = app.add_subcommand("validate", "Report exact-duplicate points");
    validate->add_option("--train", va_train, "training TSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitParse;
    }

    try {
        if (probe->parsed()) return run_probe(probe_args);
        if (analyze->parsed()) return run_analyze(an_clusters, an_train, an_out);
        if (predict->parsed()) return run_predict(predict_args);
        if (validate->parsed()) return run_validate(va_train);
    } catch (const geoprobe::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitParse;
    } catch (const geoprobe::KernelError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitKernel;
    } catch (const geoprobe::ConsistencyError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConsistency;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConsistency;
    }
    return kExitOk;
}
