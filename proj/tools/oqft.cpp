#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "oqft/errors.hpp"
#include "oqft/experiments.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw oqft::ConfigError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw oqft::ConfigError("cannot write " + path.string());
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int report_error(const oqft::Error& e) {
    nlohmann::json j = {{"error", e.kind()}, {"message", e.what()}};
    std::cerr << j.dump() << '\n';
    const std::string kind = e.kind();
    if (kind == "ConfigError" || kind == "InvalidArgument" || kind == "DimensionError") return kExitConfig;
    return kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Objective-field phase-space simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", oqft::kToolVersion);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    auto* run = app.add_subcommand("run", "Run an experiment and write report.json plus data files");
    run->add_option("config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--seed", seed, "Override the config seed");
    run->add_option("--out", out_dir, "Override the output directory");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "Parse and check a config without running it");
    validate->add_option("config", validate_path, "Experiment config (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*validate) {
            const oqft::ExperimentConfig cfg = oqft::parse_config_text(read_file(validate_path));
            oqft::validate_config(cfg);
            std::cout << "ok: " << cfg.experiment << '\n';
            return kExitOk;
        }

        oqft::ExperimentConfig cfg = oqft::parse_config_text(read_file(config_path));
        if (seed) cfg.seed = *seed;
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        oqft::validate_config(cfg);
        const oqft::ExperimentResult result = oqft::run_experiment(cfg);

        const fs::path dir(cfg.output_dir);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw oqft::ConfigError("cannot create " + dir.string() + ": " + ec.message());
        for (const auto& f : result.files) write_file(dir / f.name, f.contents);
        write_file(dir / "report.json", oqft::render_report(cfg, result, utc_timestamp()));

        for (const auto& [name, pass] : result.invariants.items()) std::cout << (pass.get<bool>() ? "PASS " : "FAIL ") << name << '\n';
        std::cout << "report: " << (dir / "report.json").string() << '\n';
        return result.all_pass() ? kExitOk : kExitInvariant;
    } catch (const oqft::Error& e) {
        return report_error(e);
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
        return kExitNumerical;
    }
}
