#include "reml/pipeline.hpp"

#include "CLI11.hpp"
#include <fmt/format.h>
#include "json.hpp"

#include <cstdio>
#include <map>
#include <optional>
#include <string>

namespace {

int exit_code(reml::ErrorKind kind) {
    switch (kind) {
    case reml::ErrorKind::config:
        return 2;
    case reml::ErrorKind::data:
        return 3;
    case reml::ErrorKind::runtime:
        return 4;
    }
    return 4;
}

std::string_view kind_name(reml::ErrorKind kind) {
    switch (kind) {
    case reml::ErrorKind::config:
        return "config";
    case reml::ErrorKind::data:
        return "data";
    case reml::ErrorKind::runtime:
        return "runtime";
    }
    return "runtime";
}

int fail(std::string_view kind, int code, std::string_view message) {
    const nlohmann::json j{{"error", kind}, {"exit", code}, {"message", message}};
    std::fprintf(stderr, "%s\n", j.dump().c_str());
    return code;
}

std::string dashed(std::string key) {
    for (auto &c : key) {
        c = c == '_' ? '-' : c;
    }
    return key;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"reml: diversified int8 ML services with moving-target voting"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_file;
    app.add_option("--config", config_file, "key = value config file; flags override it");

    std::map<std::string, std::optional<std::string>> overrides;
    for (const auto &key : reml::RunConfig::keys()) {
        auto &slot = overrides[key];
        auto names = "--" + key;
        if (key.find('_') != std::string::npos) {
            names += ",--" + dashed(key);
        }
        app.add_option_function<std::string>(names, [&slot](const std::string &v) { slot = v; },
                                              fmt::format("overrides config key {}", key));
    }

    auto *gen = app.add_subcommand("gen-data", "write a synthetic csv with ICS-style label strings");
    auto *prep = app.add_subcommand("prepare", "clean, binarize, split and normalize the data source");
    auto *train = app.add_subcommand("train-repo", "build the service repository from the prepared split");
    bool no_quantize = false;
    train->add_flag("--no-quantize", no_quantize, "keep float encoders (rML variant)");
    auto *attack = app.add_subcommand("attack", "train the surrogate and craft the adversarial test set");
    auto *evaluate = app.add_subcommand("evaluate", "score base RF, rML and reML on clean and adversarial sets");
    bool all = false;
    evaluate->add_flag("--all", all, "run prepare, attack and train-repo first");
    auto *stream = app.add_subcommand("demo-stream", "replay a shifted stream through voting and drift feedback");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        return fail("config", 2, e.what());
    }

    const auto say = [](const std::string &line) { std::printf("%s\n", line.c_str()); };
    try {
        reml::RunConfig cfg;
        if (!config_file.empty()) {
            reml::apply_config_file(cfg, config_file);
        }
        for (const auto &[key, value] : overrides) {
            if (value) {
                cfg.set(key, *value);
            }
        }
        if (gen->parsed()) {
            reml::cmd_gen_data(cfg, say);
        } else if (prep->parsed()) {
            reml::cmd_prepare(cfg, say);
        } else if (train->parsed()) {
            reml::cmd_train_repo(cfg, no_quantize, say);
        } else if (attack->parsed()) {
            reml::cmd_attack(cfg, say);
        } else if (evaluate->parsed()) {
            reml::cmd_evaluate(cfg, all, say);
        } else if (stream->parsed()) {
            reml::cmd_demo_stream(cfg, say);
        }
    } catch (const reml::Error &e) {
        return fail(kind_name(e.kind()), exit_code(e.kind()), e.what());
    } catch (const std::filesystem::filesystem_error &e) {
        return fail("runtime", 4, e.what());
    } catch (const std::exception &e) {
        return fail("runtime", 4, e.what());
    }
    return 0;
}
