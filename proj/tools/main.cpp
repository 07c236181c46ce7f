// Command-line front end: synth, train-teacher, distill, wrap, evaluate.
//
// Exit codes: 0 success, 2 usage error, 3 config validation error,
// 1 anything else. Failures print one machine-readable JSON line on stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <string>

#include "crowdkd/checkpoint.hpp"
#include "crowdkd/data.hpp"
#include "crowdkd/metrics.hpp"
#include "crowdkd/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crowdkd;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    try {
        json j;
        in >> j;
        if (!j.is_object()) throw ConfigError("config must be a JSON object: " + path);
        return j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }
}

// key=value with dotted keys; the value is parsed as JSON when possible.
void apply_override(json& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + kv);
    std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // plain string
    }
    std::string pointer = "/";
    for (char c : key) pointer += (c == '.') ? '/' : c;
    try {
        cfg[json::json_pointer(pointer)] = value;
    } catch (const json::exception& e) {
        throw ConfigError("cannot apply override '" + kv + "': " + e.what());
    }
}

void ensure_known_keys(const json& cfg, const std::set<std::string>& allowed, const std::string& what) {
    for (const auto& [key, _] : cfg.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown " + what + " config key: " + key);
    }
}

int parse_cpr(const json& v) {
    if (v.is_number_integer()) {
        const int n = v.get<int>();
        if (n >= 1 && n <= 5) return n;  // given as the denominator
        throw ConfigError("cpr denominator must be 1..5");
    }
    double value = 0.0;
    if (v.is_number_float()) {
        value = v.get<double>();
    } else if (v.is_string()) {
        const std::string s = v.get<std::string>();
        const auto slash = s.find('/');
        if (slash != std::string::npos) {
            const int num = std::stoi(s.substr(0, slash));
            const int den = std::stoi(s.substr(slash + 1));
            if (num != 1 || den < 1 || den > 5) throw ConfigError("cpr must be 1/n with n in 1..5: " + s);
            return den;
        }
        value = std::stod(s);
    } else {
        throw ConfigError("cpr must be a fraction string or number");
    }
    for (int den = 1; den <= 5; ++den) {
        if (std::abs(value - 1.0 / den) < 1e-9) return den;
    }
    throw ConfigError("cpr must be one of 1, 1/2, 1/3, 1/4, 1/5");
}

void write_snapshot(const std::string& out_dir, const std::string& name, const json& cfg) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / ("config." + name + ".resolved.json"));
    out << cfg.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const json& cfg) {
    Dataset train = synth_scenes(cfg.at("n").get<int>(), cfg.at("height").get<int>(), cfg.at("width").get<int>(),
                                 cfg.at("count_lo").get<int>(), cfg.at("count_hi").get<int>(),
                                 cfg.at("seed").get<std::uint64_t>());
    Dataset test = synth_scenes(cfg.at("n_test").get<int>(), cfg.at("height").get<int>(), cfg.at("width").get<int>(),
                                cfg.at("count_lo").get<int>(), cfg.at("count_hi").get<int>(),
                                cfg.at("seed").get<std::uint64_t>() + 1);
    test.split = Split::test;
    const std::string out = cfg.at("out").get<std::string>();
    save_dataset(out, train, test, cfg.at("force").get<bool>());
    write_snapshot(out, "synth", cfg);
    json summary = {{"scenes_train", train.size()}, {"scenes_test", test.size()}, {"root", out}};
    std::cout << summary.dump() << '\n';
    return 0;
}

// -------------------------------------------------------- train-teacher

int cmd_train_teacher(const json& cfg) {
    TeacherTrainConfig tc;
    tc.epochs = cfg.at("epochs").get<int>();
    tc.lr = cfg.at("lr").get<double>();
    tc.weight_decay = cfg.at("weight_decay").get<double>();
    tc.sigma = cfg.at("sigma").get<double>();
    tc.seed = cfg.at("seed").get<std::uint64_t>();
    tc.clip_norm = cfg.at("clip_norm").get<double>();
    tc.plateau_patience = cfg.at("plateau_patience").get<int>();
    tc.deterministic = cfg.at("deterministic").get<bool>();

    const NetworkProfile profile = NetworkProfile::by_kind(profile_kind_from_name(cfg.at("profile").get<std::string>()));
    const Dataset data = load_dataset(cfg.at("data_root").get<std::string>(), Split::train);

    auto teacher = build_teacher(profile, tc.seed);
    const TrainReport report = train_teacher(*teacher, data, tc);

    const std::string out = cfg.at("out").get<std::string>();
    fs::create_directories(out);
    const std::string ckpt = (fs::path(out) / "teacher.ckpt").string();
    save_checkpoint(ckpt, *teacher, 0);
    write_text(fs::path(out) / "train_log.jsonl", to_json_lines(report));
    write_snapshot(out, "train-teacher", cfg);

    json summary = {{"checkpoint", ckpt},
                    {"epochs", report.epochs.size()},
                    {"wall_seconds", report.wall_seconds},
                    {"final_loss", report.epochs.empty() ? 0.0 : report.epochs.back().total}};
    std::cout << summary.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------- distill

int cmd_distill(const json& cfg) {
    DistillPlan plan;
    plan.teacher_checkpoint = cfg.at("teacher_checkpoint").get<std::string>();
    plan.cpr_denom = parse_cpr(cfg.at("cpr"));
    plan.rounds = cfg.at("rounds").get<int>();
    plan.lambda1 = cfg.at("lambda1").get<double>();
    plan.lambda2 = cfg.at("lambda2").get<double>();
    plan.lr = cfg.at("lr").get<double>();
    plan.weight_decay = cfg.at("weight_decay").get<double>();
    plan.epochs = cfg.at("epochs").get<int>();
    plan.seed = cfg.at("seed").get<std::uint64_t>();
    plan.supervision = supervision_from_name(cfg.at("supervision").get<std::string>());
    plan.sigma = cfg.at("sigma").get<double>();
    plan.soft_weight = cfg.at("soft_weight").get<double>();
    plan.clip_norm = cfg.at("clip_norm").get<double>();
    plan.plateau_patience = cfg.at("plateau_patience").get<int>();
    plan.deterministic = cfg.at("deterministic").get<bool>();
    const std::string sim = cfg.at("similarity").get<std::string>();
    if (sim == "cosine") {
        plan.similarity = Similarity::cosine;
    } else if (sim == "teacher_norm") {
        plan.similarity = Similarity::teacher_norm;
    } else {
        throw ConfigError("similarity must be 'cosine' or 'teacher_norm'");
    }
    try {
        plan.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    if (plan.teacher_checkpoint.empty()) throw ConfigError("distill requires a teacher checkpoint");
    LoadedModel teacher = load_checkpoint(plan.teacher_checkpoint);
    if (teacher.kind != "teacher") throw ConfigError("distill expects a teacher checkpoint");
    auto* tnet = dynamic_cast<TeacherNet*>(teacher.network.get());

    const Dataset data = load_dataset(cfg.at("data_root").get<std::string>(), Split::train);
    DistillResult result = train_distill(plan, data, *tnet);

    const std::string out = cfg.at("out").get<std::string>();
    fs::create_directories(out);
    const std::string ckpt = (fs::path(out) / "student.ckpt").string();
    save_checkpoint(ckpt, *result.student, plan.rounds);
    write_text(fs::path(out) / "train_log.jsonl", to_json_lines(result.report));
    write_snapshot(out, "distill", cfg);

    json summary = {{"checkpoint", ckpt},
                    {"epochs", result.report.epochs.size()},
                    {"wall_seconds", result.report.wall_seconds},
                    {"final_loss", result.report.epochs.empty() ? 0.0 : result.report.epochs.back().total}};
    std::cout << summary.dump() << '\n';
    return 0;
}

// ------------------------------------------------------------------ wrap

int cmd_wrap(const json& cfg) {
    const std::string in = cfg.at("checkpoint").get<std::string>();
    const std::string out = cfg.at("out").get<std::string>();
    set_review_rounds(in, out, cfg.at("rounds").get<int>());
    write_snapshot(fs::path(out).parent_path().string().empty() ? "." : fs::path(out).parent_path().string(),
                   "wrap", cfg);
    json summary = {{"checkpoint", out}, {"rounds", cfg.at("rounds").get<int>()}};
    std::cout << summary.dump() << '\n';
    return 0;
}

// -------------------------------------------------------------- evaluate

int cmd_evaluate(const json& cfg) {
    LoadedModel model = load_checkpoint(cfg.at("checkpoint").get<std::string>());
    const Dataset data =
        load_dataset(cfg.at("data_root").get<std::string>(), split_from_name(cfg.at("split").get<std::string>()));
    const EvalResult r = evaluate_model(*model.runner, data, cfg.at("sigma").get<double>(),
                                        cfg.at("game_max_l").get<int>(), cfg.at("dump_maps").get<std::string>());
    std::cout << to_json(r) << '\n';
    if (!cfg.at("out").get<std::string>().empty()) {
        const std::string out = cfg.at("out").get<std::string>();
        fs::create_directories(out);
        write_text(fs::path(out) / "eval.json", to_json(r) + "\n");
        write_snapshot(out, "evaluate", cfg);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-distillation toolkit for density-map crowd counting"};
    app.require_subcommand(1);
    std::function<int()> action;

    // synth
    {
        auto* c = app.add_subcommand("synth", "generate a deterministic synthetic dataset");
        auto cfg = std::make_shared<json>(json{{"n", 50},
                                               {"n_test", 10},
                                               {"height", 64},
                                               {"width", 64},
                                               {"count_lo", 5},
                                               {"count_hi", 30},
                                               {"seed", 1},
                                               {"out", ""},
                                               {"force", false}});
        c->add_option("--n", "number of training scenes")->type_name("INT");
        c->add_option("--n-test", "number of test scenes")->type_name("INT");
        c->add_option("--height", "scene height")->type_name("INT");
        c->add_option("--width", "scene width")->type_name("INT");
        c->add_option("--count-lo", "minimum head count")->type_name("INT");
        c->add_option("--count-hi", "maximum head count")->type_name("INT");
        c->add_option("--seed", "generator seed")->type_name("INT");
        c->add_option("--out", "output dataset directory")->required();
        c->add_flag("--force", "overwrite an existing dataset");
        c->callback([c, cfg, &action] {
            auto& j = *cfg;
            if (c->count("--n")) j["n"] = std::stoi(c->get_option("--n")->as<std::string>());
            if (c->count("--n-test")) j["n_test"] = std::stoi(c->get_option("--n-test")->as<std::string>());
            if (c->count("--height")) j["height"] = std::stoi(c->get_option("--height")->as<std::string>());
            if (c->count("--width")) j["width"] = std::stoi(c->get_option("--width")->as<std::string>());
            if (c->count("--count-lo")) j["count_lo"] = std::stoi(c->get_option("--count-lo")->as<std::string>());
            if (c->count("--count-hi")) j["count_hi"] = std::stoi(c->get_option("--count-hi")->as<std::string>());
            if (c->count("--seed")) j["seed"] = std::stoull(c->get_option("--seed")->as<std::string>());
            j["out"] = c->get_option("--out")->as<std::string>();
            j["force"] = c->count("--force") > 0;
            action = [cfg] { return cmd_synth(*cfg); };
        });
    }

    // shared config machinery for the training commands
    auto add_config_options = [](CLI::App* c) {
        c->add_option("--config", "JSON config file");
        c->add_option("--set", "dotted-key=value config overrides")->take_all();
        c->add_option("--out", "output directory")->required();
        c->add_option("--data-root", "dataset root directory");
        c->add_option("--seed", "run seed")->type_name("INT");
        c->add_flag("--deterministic,!--no-deterministic", "bit-reproducible single-threaded execution");
    };
    auto resolve_config = [](CLI::App* c, json defaults, const std::set<std::string>& allowed) {
        json cfg = std::move(defaults);
        if (c->count("--config")) {
            const json file_cfg = load_config_file(c->get_option("--config")->as<std::string>());
            ensure_known_keys(file_cfg, allowed, c->get_name());
            cfg.update(file_cfg);
        }
        if (c->count("--set")) {
            for (const auto& kv : c->get_option("--set")->results()) apply_override(cfg, kv);
            ensure_known_keys(cfg, allowed, c->get_name());
        }
        if (c->count("--data-root")) cfg["data_root"] = c->get_option("--data-root")->as<std::string>();
        if (c->count("--seed")) cfg["seed"] = std::stoull(c->get_option("--seed")->as<std::string>());
        if (c->count("--deterministic")) cfg["deterministic"] = c->get_option("--deterministic")->as<bool>();
        cfg["out"] = c->get_option("--out")->as<std::string>();
        if (cfg.value("data_root", "").empty()) throw ConfigError("a dataset root is required (--data-root)");
        return cfg;
    };

    // train-teacher
    {
        auto* c = app.add_subcommand("train-teacher", "train a teacher on rasterized ground truth");
        add_config_options(c);
        c->add_option("--profile", "teacher profile: toy | csrnet_like | bl_like");
        c->add_option("--epochs", "training epochs")->type_name("INT");
        c->add_option("--lr", "Adam learning rate")->type_name("FLOAT");
        c->add_option("--sigma", "ground-truth kernel std in px")->type_name("FLOAT");
        static const std::set<std::string> allowed = {"profile",   "epochs",    "lr",  "weight_decay",
                                                      "sigma",     "seed",      "clip_norm",
                                                      "plateau_patience",       "deterministic",
                                                      "data_root", "out"};
        c->callback([c, &resolve_config, &action] {
            json cfg = resolve_config(c,
                                      json{{"profile", "toy"},
                                           {"epochs", 200},
                                           {"lr", 1e-3},
                                           {"weight_decay", 0.0},
                                           {"sigma", 4.0},
                                           {"seed", 0},
                                           {"clip_norm", 0.0},
                                           {"plateau_patience", 0},
                                           {"deterministic", true},
                                           {"data_root", ""}},
                                      allowed);
            if (c->count("--profile")) cfg["profile"] = c->get_option("--profile")->as<std::string>();
            if (c->count("--epochs")) cfg["epochs"] = std::stoi(c->get_option("--epochs")->as<std::string>());
            if (c->count("--lr")) cfg["lr"] = std::stod(c->get_option("--lr")->as<std::string>());
            if (c->count("--sigma")) cfg["sigma"] = std::stod(c->get_option("--sigma")->as<std::string>());
            action = [cfg] { return cmd_train_teacher(cfg); };
        });
    }

    // distill
    {
        auto* c = app.add_subcommand("distill", "distill a student from a trained teacher");
        add_config_options(c);
        c->add_option("--teacher", "teacher checkpoint path");
        c->add_option("--rounds", "review rounds p")->type_name("INT");
        c->add_option("--cpr", "channel preserving rate, e.g. 1/4");
        c->add_option("--lambda1", "intra-loss weight")->type_name("FLOAT");
        c->add_option("--lambda2", "inter-loss weight")->type_name("FLOAT");
        c->add_option("--epochs", "training epochs")->type_name("INT");
        c->add_option("--supervision", "hard | hard+soft");
        static const std::set<std::string> allowed = {
            "teacher_checkpoint", "cpr",    "rounds", "lambda1",     "lambda2", "lr",
            "weight_decay",       "epochs", "seed",   "supervision", "sigma",   "soft_weight",
            "clip_norm",          "plateau_patience", "deterministic", "similarity", "data_root", "out"};
        c->callback([c, &resolve_config, &action] {
            json cfg = resolve_config(c,
                                      json{{"teacher_checkpoint", ""},
                                           {"cpr", "1/4"},
                                           {"rounds", 2},
                                           {"lambda1", 0.5},
                                           {"lambda2", 0.5},
                                           {"lr", 1e-4},
                                           {"weight_decay", 5e-4},
                                           {"epochs", 100},
                                           {"seed", 0},
                                           {"supervision", "hard"},
                                           {"sigma", 4.0},
                                           {"soft_weight", 1.0},
                                           {"clip_norm", 0.0},
                                           {"plateau_patience", 0},
                                           {"deterministic", true},
                                           {"similarity", "cosine"},
                                           {"data_root", ""}},
                                      allowed);
            if (c->count("--teacher")) cfg["teacher_checkpoint"] = c->get_option("--teacher")->as<std::string>();
            if (c->count("--rounds")) cfg["rounds"] = std::stoi(c->get_option("--rounds")->as<std::string>());
            if (c->count("--cpr")) cfg["cpr"] = c->get_option("--cpr")->as<std::string>();
            if (c->count("--lambda1")) cfg["lambda1"] = std::stod(c->get_option("--lambda1")->as<std::string>());
            if (c->count("--lambda2")) cfg["lambda2"] = std::stod(c->get_option("--lambda2")->as<std::string>());
            if (c->count("--epochs")) cfg["epochs"] = std::stoi(c->get_option("--epochs")->as<std::string>());
            if (c->count("--supervision")) cfg["supervision"] = c->get_option("--supervision")->as<std::string>();
            action = [cfg] { return cmd_distill(cfg); };
        });
    }

    // wrap
    {
        auto* c = app.add_subcommand("wrap", "re-export a checkpoint with review metadata");
        c->add_option("--checkpoint", "input checkpoint")->required();
        c->add_option("--rounds", "review rounds p")->required()->type_name("INT");
        c->add_option("--out", "output checkpoint path")->required();
        c->callback([c, &action] {
            json cfg = {{"checkpoint", c->get_option("--checkpoint")->as<std::string>()},
                        {"rounds", std::stoi(c->get_option("--rounds")->as<std::string>())},
                        {"out", c->get_option("--out")->as<std::string>()}};
            action = [cfg] { return cmd_wrap(cfg); };
        });
    }

    // evaluate
    {
        auto* c = app.add_subcommand("evaluate", "compute MAE / MSE / GAME for a checkpoint");
        c->add_option("--checkpoint", "checkpoint to evaluate")->required();
        c->add_option("--data-root", "dataset root directory")->required();
        c->add_option("--split", "train | test");
        c->add_option("--sigma", "ground-truth kernel std in px")->type_name("FLOAT");
        c->add_option("--game-max-l", "largest GAME level")->type_name("INT");
        c->add_option("--dump-maps", "directory for predicted-map PNGs");
        c->add_option("--out", "optional output directory for eval.json");
        c->callback([c, &action] {
            json cfg = {{"checkpoint", c->get_option("--checkpoint")->as<std::string>()},
                        {"data_root", c->get_option("--data-root")->as<std::string>()},
                        {"split", c->count("--split") ? c->get_option("--split")->as<std::string>() : "test"},
                        {"sigma", c->count("--sigma") ? std::stod(c->get_option("--sigma")->as<std::string>()) : 4.0},
                        {"game_max_l",
                         c->count("--game-max-l") ? std::stoi(c->get_option("--game-max-l")->as<std::string>()) : 3},
                        {"dump_maps", c->count("--dump-maps") ? c->get_option("--dump-maps")->as<std::string>() : ""},
                        {"out", c->count("--out") ? c->get_option("--out")->as<std::string>() : ""}};
            action = [cfg] { return cmd_evaluate(cfg); };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        std::cerr << json{{"error", e.what()}}.dump() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << json{{"error", e.what()}}.dump() << '\n';
        return 3;
    }

    try {
        return action ? action() : 2;
    } catch (const ConfigError& e) {
        std::cerr << json{{"error", e.what()}}.dump() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", e.what()}}.dump() << '\n';
        return 1;
    }
}
