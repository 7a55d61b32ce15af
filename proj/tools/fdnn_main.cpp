// fdnn: face destylization trainer and evaluator.
//
// Subcommands: synth, train, destylize, eval, consistency. Every command
// with a fixed seed and fixed inputs is bit-reproducible, including stdout;
// progress chatter goes to stderr. Exit codes: 0 ok, 2 config, 3 io,
// 4 numeric.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdnn/errors.hpp"
#include "fdnn/metrics.hpp"
#include "fdnn/model.hpp"
#include "fdnn/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw fdnn::IoError("cannot write " + path.string());
    out << text;
    if (!out) throw fdnn::IoError("short write to " + path.string());
}

void echo_config(const fs::path& path, const json& cfg) { write_text(path, cfg.dump(2) + "\n"); }

json load_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw fdnn::IoError("cannot open config file " + path.string());
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw fdnn::IoError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

json epoch_json(const fdnn::EpochStats& es) {
    return json{{"epoch", es.epoch},       {"q", es.mean_q},
                {"f", es.mean_f},          {"adv", es.mean_adv},
                {"d_acc_real", es.d_acc_real}, {"d_acc_fake", es.d_acc_fake},
                {"lambda", es.lambda},     {"alpha", es.alpha}};
}

struct TrainCli {
    std::string data_dir;
    std::string out_path;
    std::string log_path;
    std::string config_file;
    std::string resume_path;
    fdnn::TrainConfig cfg;
    std::string adv_sign_name = "nonsaturating";
};

int run_train(const TrainCli& cli, const CLI::App* cmd) {
    auto [train_split, test_split] = fdnn::load_dataset(fs::path(cli.data_dir) / "manifest.json");
    (void)test_split;

    fdnn::Generator g;
    fdnn::Discriminator d;
    fdnn::TrainState state;
    fdnn::TrainConfig cfg;

    auto passed = [&](const std::string& flag) { return cmd->count(flag) > 0; };
    const bool resuming = !cli.resume_path.empty();
    if (resuming) {
        fdnn::Checkpoint ck = fdnn::load_checkpoint(cli.resume_path);
        cfg = ck.config;
        g = std::move(ck.generator);
        d = std::move(ck.discriminator);
        state = std::move(ck.state);
    } else {
        if (!cli.config_file.empty()) cfg = fdnn::train_config_from_json(load_json_file(cli.config_file));
        cfg.image_size = train_split.image_size;
    }
    // explicit flags win over config file / checkpoint values
    if (passed("--epochs")) cfg.epochs = cli.cfg.epochs;
    if (passed("--seed")) cfg.seed = cli.cfg.seed;
    if (passed("--batch-size")) cfg.batch_size = cli.cfg.batch_size;
    if (passed("--base-channels")) cfg.base_channels = cli.cfg.base_channels;
    if (passed("--image-size")) cfg.image_size = cli.cfg.image_size;
    if (passed("--lambda0")) cfg.lambda0 = cli.cfg.lambda0;
    if (passed("--alpha0")) cfg.alpha0 = cli.cfg.alpha0;
    if (passed("--beta")) cfg.beta = cli.cfg.beta;
    if (passed("--eps")) cfg.eps = cli.cfg.eps;
    if (passed("--adv-sign")) cfg.adv_sign = fdnn::adv_sign_from_name(cli.adv_sign_name);
    if (passed("--checkpoint-every")) cfg.checkpoint_every = cli.cfg.checkpoint_every;
    cfg.checkpoint_path = cli.out_path;
    cfg.validate();

    if (cfg.image_size != train_split.image_size)
        throw fdnn::ConfigError("configured image size " + std::to_string(cfg.image_size) +
                                " does not match dataset size " +
                                std::to_string(train_split.image_size));
    if (!resuming) {
        g = fdnn::build_generator(cfg.image_size, cfg.base_channels);
        d = fdnn::build_discriminator(cfg.image_size, cfg.base_channels);
        fdnn::Rng rng_g(fdnn::derive_seed(cfg.seed, "init_g"));
        fdnn::Rng rng_d(fdnn::derive_seed(cfg.seed, "init_d"));
        g.stack().init_weights(rng_g);
        d.stack().init_weights(rng_d);
        state = fdnn::make_train_state(g, d, cfg);
    }

    const fs::path out(cli.out_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    const fs::path log_path = cli.log_path.empty() ? fs::path(cli.out_path + ".log.jsonl")
                                                   : fs::path(cli.log_path);
    std::ofstream log(log_path, resuming ? std::ios::app : std::ios::trunc);
    if (!log) throw fdnn::IoError("cannot write log " + log_path.string());

    echo_config(fs::path(cli.out_path + ".config.json"), fdnn::train_config_to_json(cfg));

    fdnn::TrainHooks hooks;
    hooks.on_epoch = [&](const fdnn::EpochStats& es) {
        const std::string line = epoch_json(es).dump();
        log << line << "\n";
        log.flush();
        std::cout << line << "\n";
    };
    hooks.on_checkpoint = [&](std::size_t) { fdnn::save_checkpoint(out, g, d, state, cfg); };

    std::cerr << "training on " << train_split.records.size() << " pairs for " << cfg.epochs
              << " epochs\n";
    fdnn::train(g, d, train_split, cfg, state, hooks);
    std::cout << "checkpoint " << cli.out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"face destylization: dataset synthesis, training, inference, evaluation"};
    app.require_subcommand(1);

    // ------------------------------------------------------------- synth
    struct {
        std::string out_dir;
        std::size_t train_ids = 64;
        std::size_t test_ids = 20;
        std::size_t size = 32;
        std::uint64_t seed = 42;
    } synth;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a paired stylized/real dataset");
    synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();
    synth_cmd->add_option("--train-ids", synth.train_ids, "number of training identities");
    synth_cmd->add_option("--test-ids", synth.test_ids, "number of test identities");
    synth_cmd->add_option("--size", synth.size, "image size (multiple of 8)");
    synth_cmd->add_option("--seed", synth.seed, "root seed");

    // ------------------------------------------------------------- train
    TrainCli train_cli;
    CLI::App* train_cmd = app.add_subcommand("train", "train a model on a synthesized dataset");
    train_cmd->add_option("--data", train_cli.data_dir, "dataset directory (with manifest.json)")
        ->required();
    train_cmd->add_option("--out", train_cli.out_path, "checkpoint output path")->required();
    train_cmd->add_option("--log", train_cli.log_path, "per-epoch JSON log path");
    train_cmd->add_option("--config", train_cli.config_file, "JSON config file");
    train_cmd->add_option("--resume", train_cli.resume_path, "checkpoint to resume from");
    train_cmd->add_option("--epochs", train_cli.cfg.epochs, "total epochs to train");
    train_cmd->add_option("--seed", train_cli.cfg.seed, "root seed");
    train_cmd->add_option("--batch-size", train_cli.cfg.batch_size, "batch size");
    train_cmd->add_option("--base-channels", train_cli.cfg.base_channels, "channel width");
    train_cmd->add_option("--image-size", train_cli.cfg.image_size, "image size");
    train_cmd->add_option("--lambda0", train_cli.cfg.lambda0, "initial adversarial weight");
    train_cmd->add_option("--alpha0", train_cli.cfg.alpha0, "initial learning rate");
    train_cmd->add_option("--beta", train_cli.cfg.beta, "rms decay rate");
    train_cmd->add_option("--eps", train_cli.cfg.eps, "rms epsilon");
    train_cmd->add_option("--adv-sign", train_cli.adv_sign_name,
                          "adversarial sign mode: nonsaturating|literal");
    train_cmd->add_option("--checkpoint-every", train_cli.cfg.checkpoint_every,
                          "checkpoint cadence in epochs (0 = final only)");

    // --------------------------------------------------------- destylize
    struct {
        std::string ckpt, in_path, out_path;
    } dest;
    CLI::App* dest_cmd = app.add_subcommand("destylize", "run the generator on one image");
    dest_cmd->add_option("--ckpt", dest.ckpt, "checkpoint path")->required();
    dest_cmd->add_option("--in", dest.in_path, "input PPM image")->required();
    dest_cmd->add_option("--out", dest.out_path, "output PPM image")->required();

    // ---------------------------------------------------------------- eval
    struct {
        std::string ckpt, data_dir, out_path;
    } eval_opts;
    CLI::App* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM evaluation on the test split");
    eval_cmd->add_option("--ckpt", eval_opts.ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--data", eval_opts.data_dir, "dataset directory")->required();
    eval_cmd->add_option("--out", eval_opts.out_path, "JSON report path");

    // --------------------------------------------------------- consistency
    struct {
        std::string ckpt, data_dir, out_path;
        std::size_t k = 5;
        std::string embed = "bottleneck";
    } cons;
    CLI::App* cons_cmd =
        app.add_subcommand("consistency", "top-k identity retrieval over destylized faces");
    cons_cmd->add_option("--ckpt", cons.ckpt, "checkpoint path")->required();
    cons_cmd->add_option("--data", cons.data_dir, "dataset directory")->required();
    cons_cmd->add_option("--k", cons.k, "retrieval depth");
    cons_cmd->add_option("--embed", cons.embed, "embedding: bottleneck|fallback");
    cons_cmd->add_option("--out", cons.out_path, "JSON report path");

    try {
        app.parse(argc, argv);

        if (*synth_cmd) {
            auto [train_split, test_split] =
                fdnn::make_dataset(synth.train_ids, synth.test_ids, fdnn::default_seen_styles(),
                                   fdnn::default_unseen_styles(), synth.size, synth.seed);
            fs::create_directories(synth.out_dir);
            fdnn::write_dataset(train_split, test_split, synth.out_dir);
            echo_config(fs::path(synth.out_dir) / "synth.config.json",
                        json{{"train_ids", synth.train_ids},
                             {"test_ids", synth.test_ids},
                             {"image_size", synth.size},
                             {"seed", synth.seed}});
            std::cout << "wrote " << train_split.records.size() << " train pairs and "
                      << test_split.records.size() << " test pairs to " << synth.out_dir << "\n";
            return 0;
        }
        if (*train_cmd) return run_train(train_cli, train_cmd);
        if (*dest_cmd) {
            fdnn::Checkpoint ck = fdnn::load_checkpoint(dest.ckpt);
            const fdnn::Image input = fdnn::load_ppm(dest.in_path);
            const fdnn::Image output = fdnn::destylize(ck.generator, input);
            fdnn::save_ppm(output, dest.out_path);
            echo_config(fs::path(dest.out_path + ".config.json"),
                        fdnn::train_config_to_json(ck.config));
            std::cout << "wrote " << dest.out_path << "\n";
            return 0;
        }
        if (*eval_cmd) {
            fdnn::Checkpoint ck = fdnn::load_checkpoint(eval_opts.ckpt);
            auto [train_split, test_split] =
                fdnn::load_dataset(fs::path(eval_opts.data_dir) / "manifest.json");
            (void)train_split;
            fdnn::Generator& g = ck.generator;
            const fdnn::MetricReport report = fdnn::evaluate(
                [&](const fdnn::Image& img) { return fdnn::destylize(g, img); }, test_split);
            std::cout << fdnn::report_table(report);
            if (!eval_opts.out_path.empty()) {
                write_text(eval_opts.out_path, fdnn::report_json(report).dump(2) + "\n");
                echo_config(fs::path(eval_opts.out_path + ".config.json"),
                            fdnn::train_config_to_json(ck.config));
            }
            return 0;
        }
        if (*cons_cmd) {
            if (cons.embed != "bottleneck" && cons.embed != "fallback")
                throw fdnn::ConfigError("unknown embedding '" + cons.embed +
                                        "' (want bottleneck or fallback)");
            fdnn::Checkpoint ck = fdnn::load_checkpoint(cons.ckpt);
            auto [train_split, test_split] =
                fdnn::load_dataset(fs::path(cons.data_dir) / "manifest.json");
            (void)train_split;
            fdnn::Generator& g = ck.generator;
            fdnn::Embedder embedder;
            if (cons.embed == "bottleneck")
                embedder = [&](const fdnn::Image& img) { return fdnn::bottleneck_embedding(g, img); };
            else
                embedder = [](const fdnn::Image& img) { return fdnn::embed_fallback(img); };
            const fdnn::ConsistencyReport report = fdnn::consistency_protocol(
                [&](const fdnn::Image& img) { return fdnn::destylize(g, img); }, embedder,
                test_split, cons.k);
            std::cout << fdnn::consistency_table(report);
            if (!cons.out_path.empty()) {
                write_text(cons.out_path, fdnn::consistency_json(report).dump(2) + "\n");
                echo_config(fs::path(cons.out_path + ".config.json"),
                            fdnn::train_config_to_json(ck.config));
            }
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    } catch (const fdnn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.error_class());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
