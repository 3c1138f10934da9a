#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include "geoprobe/dataset.hpp"
#include "support/run_cli.hpp"
#include "support/synthetic.hpp"

namespace {

std::string blobs_tsv() {
    synth::Rng rng(101);
    auto d = synth::two_blobs(rng, 10, 2);
    return geoprobe::to_tsv(d);
}

std::string xor_tsv() { return geoprobe::to_tsv(synth::xor_dataset()); }

}  // namespace

TEST_CASE("probe writes cluster JSON and a summary") {
    cli::TempDir dir;
    auto train = dir.write("blobs.tsv", blobs_tsv());
    auto out = dir.path() / "clusters.json";
    auto res = cli::run({"probe", "--train", train.string(), "--out", out.string()});
    INFO(res.err);
    REQUIRE(res.exit_code == 0);
    REQUIRE(res.err.find("clusters=2 labels=2") != std::string::npos);
    REQUIRE(res.err.find("kernel_calls=") != std::string::npos);

    auto doc = nlohmann::json::parse(cli::slurp(out));
    REQUIRE(doc.at("clusters").size() == 2);
    REQUIRE(doc.at("label_names") == nlohmann::json({"A", "B"}));
    REQUIRE(doc.at("config").contains("tau_sep"));
}

TEST_CASE("probe on a ragged file exits 2 naming the line") {
    cli::TempDir dir;
    auto train = dir.write("ragged.tsv", "A\t0 0\nA\t1\n");
    auto res = cli::run({"probe", "--train", train.string()});
    REQUIRE(res.exit_code == 2);
    REQUIRE(res.err.find("line 2") != std::string::npos);
}

TEST_CASE("fast/no-cache probe output is bytewise identical to defaults") {
    cli::TempDir dir;
    auto train = dir.write("xor.tsv", xor_tsv());
    auto out_default = dir.path() / "a.json";
    auto out_fast = dir.path() / "b.json";
    REQUIRE(cli::run({"probe", "--train", train.string(), "--out", out_default.string()}).exit_code == 0);
    REQUIRE(cli::run({"probe", "--train", train.string(), "--variant", "fast", "--no-cache",
                      "--out", out_fast.string()})
                .exit_code == 0);
    REQUIRE(cli::slurp(out_default) == cli::slurp(out_fast));
}

TEST_CASE("repeated invocations are bytewise deterministic") {
    cli::TempDir dir;
    auto train = dir.write("blobs.tsv", blobs_tsv());
    auto out1 = dir.path() / "r1.json";
    auto out2 = dir.path() / "r2.json";
    REQUIRE(cli::run({"probe", "--train", train.string(), "--out", out1.string()}).exit_code == 0);
    REQUIRE(cli::run({"probe", "--train", train.string(), "--out", out2.string()}).exit_code == 0);
    REQUIRE(cli::slurp(out1) == cli::slurp(out2));
}

TEST_CASE("analyze emits linearity and distance reports") {
    cli::TempDir dir;
    auto train = dir.write("blobs.tsv", blobs_tsv());
    auto clusters = dir.path() / "clusters.json";
    REQUIRE(cli::run({"probe", "--train", train.string(), "--out", clusters.string()}).exit_code == 0);

    auto out = dir.path() / "report.json";
    auto res = cli::run({"analyze", "--clusters", clusters.string(), "--train", train.string(),
                         "--out", out.string()});
    INFO(res.err);
    REQUIRE(res.exit_code == 0);
    auto doc = nlohmann::json::parse(cli::slurp(out));
    REQUIRE(doc.at("linearity").at("linearly_separable") == true);
    REQUIRE(doc.at("distance").at("pairs").size() == 1);
    REQUIRE(doc.at("distance").at("min_cross_label_distance").get<double>() > 0.0);
}

TEST_CASE("analyze flags the XOR run as non-linear") {
    cli::TempDir dir;
    auto train = dir.write("xor.tsv", xor_tsv());
    auto clusters = dir.path() / "clusters.json";
    REQUIRE(cli::run({"probe", "--train", train.string(), "--out", clusters.string()}).exit_code == 0);
    auto res = cli::run({"analyze", "--clusters", clusters.string(), "--train", train.string()});
    REQUIRE(res.exit_code == 0);
    auto doc = nlohmann::json::parse(res.out);
    REQUIRE(doc.at("linearity").at("n_clusters") == 3);
    REQUIRE(doc.at("linearity").at("n_labels") == 2);
    REQUIRE(doc.at("linearity").at("linearly_separable") == false);
}

TEST_CASE("analyze exits 3 on a corrupted members field") {
    cli::TempDir dir;
    auto train = dir.write("blobs.tsv", blobs_tsv());
    auto clusters = dir.path() / "clusters.json";
    REQUIRE(cli::run({"probe", "--train", train.string(), "--out", clusters.string()}).exit_code == 0);
    auto doc = nlohmann::json::parse(cli::slurp(clusters));
    doc["clusters"][0]["members"][0] = 99999;  // out of range
    dir.write("clusters.json", doc.dump());
    auto res = cli::run({"analyze", "--clusters", clusters.string(), "--train", train.string()});
    REQUIRE(res.exit_code == 3);
}

TEST_CASE("analyze exits 2 on malformed cluster JSON") {
    cli::TempDir dir;
    auto train = dir.write("blobs.tsv", blobs_tsv());
    auto clusters = dir.write("clusters.json", "{not json");
    auto res = cli::run({"analyze", "--clusters", clusters.string(), "--train", train.string()});
    REQUIRE(res.exit_code == 2);
}

TEST_CASE("predict on the training set reports perfect intra-accuracy") {
    cli::TempDir dir;
    auto train = dir.write("blobs.tsv", blobs_tsv());
    auto clusters = dir.path() / "clusters.json";
    REQUIRE(cli::run({"probe", "--train", train.string(), "--out", clusters.string()}).exit_code == 0);
    auto res = cli::run({"predict", "--clusters", clusters.string(), "--train", train.string(),
                         "--test", train.string()});
    INFO(res.err);
    REQUIRE(res.exit_code == 0);
    REQUIRE(res.err.find("intra_accuracy=1") != std::string::npos);
    REQUIRE(res.err.find("knn_accuracy=1") != std::string::npos);

    // One JSON object per test point, in row order.
    std::istringstream lines(res.out);
    std::string line;
    int count = 0;
    while (std::getline(lines, line)) {
        auto o = nlohmann::json::parse(line);
        REQUIRE(o.at("point_id") == std::to_string(count));
        REQUIRE(o.at("gold_label") == o.at("predicted_label"));
        ++count;
    }
    REQUIRE(count == 20);
}

TEST_CASE("predict with scores emits normalized per-label scores") {
    cli::TempDir dir;
    auto train = dir.write("blobs.tsv", blobs_tsv());
    auto clusters = dir.path() / "clusters.json";
    REQUIRE(cli::run({"probe", "--train", train.string(), "--out", clusters.string()}).exit_code == 0);
    auto test = dir.write("test.tsv", "A\t0.2 0.1\nB\t20.1 -0.2\n");
    auto res = cli::run({"predict", "--clusters", clusters.string(), "--train", train.string(),
                         "--test", test.string(), "--scores"});
    REQUIRE(res.exit_code == 0);
    std::istringstream lines(res.out);
    std::string line;
    while (std::getline(lines, line)) {
        auto o = nlohmann::json::parse(line);
        double sum = 0.0;
        for (const auto& [name, v] : o.at("scores").items()) sum += v.get<double>();
        REQUIRE(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("predict --difficult appends ranked mismatches") {
    cli::TempDir dir;
    auto train = dir.write("blobs.tsv", blobs_tsv());
    auto clusters = dir.path() / "clusters.json";
    REQUIRE(cli::run({"probe", "--train", train.string(), "--out", clusters.string()}).exit_code == 0);
    auto test = dir.write("test.tsv", "A\t0.2 0.1\nA\t20.0 0.0\n");  // second point mislabeled
    auto res = cli::run({"predict", "--clusters", clusters.string(), "--train", train.string(),
                         "--test", test.string(), "--difficult", "5"});
    REQUIRE(res.exit_code == 0);
    REQUIRE(res.out.find("difficult_rank") != std::string::npos);
    std::istringstream lines(res.out);
    std::string line;
    int ranked = 0;
    while (std::getline(lines, line)) {
        auto o = nlohmann::json::parse(line);
        if (o.contains("difficult_rank")) {
            ++ranked;
            REQUIRE(o.at("gold_label") == "A");
            REQUIRE(o.at("predicted_label") == "B");
            REQUIRE(o.at("gap").get<double>() > 0.0);
        }
    }
    REQUIRE(ranked == 1);
}

TEST_CASE("predict errors") {
    cli::TempDir dir;
    auto train = dir.write("blobs.tsv", blobs_tsv());
    auto clusters = dir.path() / "clusters.json";
    REQUIRE(cli::run({"probe", "--train", train.string(), "--out", clusters.string()}).exit_code == 0);

    SECTION("dimension mismatch") {
        auto bad = dir.write("bad.tsv", "A\t1 2 3\n");
        auto res = cli::run({"predict", "--clusters", clusters.string(), "--train", train.string(),
                             "--test", bad.string()});
        REQUIRE(res.exit_code != 0);
    }
    SECTION("unseen test label is named") {
        auto bad = dir.write("bad.tsv", "MYSTERY\t1 2\n");
        auto res = cli::run({"predict", "--clusters", clusters.string(), "--train", train.string(),
                             "--test", bad.string()});
        REQUIRE(res.exit_code != 0);
        REQUIRE(res.err.find("MYSTERY") != std::string::npos);
    }
}

TEST_CASE("validate reports duplicates") {
    cli::TempDir dir;
    auto train = dir.write("dups.tsv", "A\t0 0\nB\t0 0\nA\t1 1\nA\t1 1\n");
    auto res = cli::run({"validate", "--train", train.string()});
    REQUIRE(res.exit_code == 0);
    auto doc = nlohmann::json::parse(res.out);
    REQUIRE(doc.at("duplicate_conflicts") == nlohmann::json::parse("[[0,1]]"));
    REQUIRE(doc.at("duplicate_same_label") == nlohmann::json::parse("[[2,3]]"));
    REQUIRE(doc.at("n_points") == 4);
}

TEST_CASE("probe honors --noise-min-size in config and summary") {
    cli::TempDir dir;
    // Two blobs plus a stray A point placed so that joining it to blob A
    // would sweep the hull straight through blob B: it stays a singleton.
    std::string tsv = blobs_tsv() + "A\t40 0\n";
    auto train = dir.write("noisy.tsv", tsv);
    auto out = dir.path() / "clusters.json";
    auto res = cli::run({"probe", "--train", train.string(), "--noise-min-size", "1", "--out",
                         out.string()});
    REQUIRE(res.exit_code == 0);
    REQUIRE(res.err.find("removed=1") != std::string::npos);
    REQUIRE(res.err.find("clusters=2 ") != std::string::npos);
    auto doc = nlohmann::json::parse(cli::slurp(out));
    REQUIRE(doc.at("config").at("noise_min_size") == 1);
    REQUIRE(doc.at("clusters").size() == 3);  // the file keeps the full partition
}

TEST_CASE("missing required flags exit 2") {
    auto res = cli::run({"probe"});
    REQUIRE(res.exit_code == 2);
    auto res2 = cli::run({"frobnicate"});
    REQUIRE(res2.exit_code == 2);
}

TEST_CASE("--normalize is recorded and reapplied downstream") {
    cli::TempDir dir;
    // Two labels separable by direction but not by raw position.
    std::string tsv = "A\t10 0\nA\t5 0.5\nB\t0 10\nB\t0.5 5\n";
    auto train = dir.write("dir.tsv", tsv);
    auto out = dir.path() / "clusters.json";
    auto res = cli::run({"probe", "--train", train.string(), "--normalize", "--out", out.string()});
    REQUIRE(res.exit_code == 0);
    auto doc = nlohmann::json::parse(cli::slurp(out));
    REQUIRE(doc.at("config").at("normalize") == true);
    // tau_sep derives from the post-normalization diameter (about 2.8, not 14).
    REQUIRE(doc.at("config").at("tau_sep").get<double>() < 5e-7);
    auto pres = cli::run({"predict", "--clusters", out.string(), "--train", train.string(),
                          "--test", train.string()});
    REQUIRE(pres.exit_code == 0);
    REQUIRE(pres.err.find("intra_accuracy=1") != std::string::npos);
}
