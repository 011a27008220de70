#include "alab/config.hpp"
#include "alab/consensus.hpp"
#include "alab/engine.hpp"
#include "alab/ingestion.hpp"
#include "alab/serialize.hpp"
#include "alab/service.hpp"
#include "alab/simulator.hpp"
#include "alab/store.hpp"

#include <CLI11.hpp>

#include <unistd.h>

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>

using namespace alab;
using nlohmann::json;

namespace {

bool use_color() {
    const char* no_color = std::getenv("NO_COLOR");
    return (!no_color || !*no_color) && isatty(fileno(stderr));
}

std::string quoted(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c == '\n' ? ' ' : c;
    }
    return out;
}

int report_error(std::string_view kind, const std::string& message) {
    const bool color = use_color();
    std::cerr << (color ? "\033[31merror\033[0m" : "error") << " kind=" << kind << " msg=\"" << quoted(message) << "\"\n";
    return 1;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidArgument, "cannot read " + path);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] != '#') out.push_back(line);
    }
    return out;
}

Service* running_service = nullptr;

void on_signal(int) {
    if (running_service) running_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"alab: active-learning labeling platform"};
    app.require_subcommand(1);
    std::string config_path, store_path;
    bool as_json = false;
    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--store", store_path, "database file (overrides config)");
    app.add_flag("--json", as_json, "structured output");

    app.add_subcommand("migrate", "create or upgrade the database schema");

    auto* ingest = app.add_subcommand("ingest", "load embeddings and catalog entries");
    std::string sidecar, manifest, classes_file, media_path = "/data";
    ingest->add_option("--sidecar", sidecar, "binary embedding sidecar")->check(CLI::ExistingFile);
    ingest->add_option("--manifest", manifest, "text manifest")->check(CLI::ExistingFile);
    ingest->add_option("--classes", classes_file, "seed ontology, one class name per line")->check(CLI::ExistingFile);
    ingest->add_option("--path", media_path, "directory holding the audio files");

    auto* iterate = app.add_subcommand("iterate", "run one AL iteration");
    std::string node, from, to, strategy = "mal_mf";
    std::optional<std::size_t> budget;
    std::optional<IterationId> iteration_id;
    iterate->add_option("--node", node)->required();
    iterate->add_option("--from", from, "window start, ISO-8601 UTC")->required();
    iterate->add_option("--to", to, "window end (exclusive)")->required();
    iterate->add_option("--budget", budget);
    iterate->add_option("--iteration-id", iteration_id);
    iterate->add_option("--strategy", strategy)->check(CLI::IsMember({"mal_mf", "random"}));

    auto* consensus = app.add_subcommand("consensus", "compute consensus and promote medoids");
    IterationId consensus_iteration = 0;
    consensus->add_option("--iteration", consensus_iteration)->required();

    auto* report = app.add_subcommand("report", "histograms, iteration summaries and table exports");
    bool histogram = false, plan = false;
    std::size_t top = 50;
    std::optional<IterationId> report_iteration;
    std::string export_table, hist_node;
    report->add_flag("--histogram", histogram);
    report->add_option("--top", top);
    report->add_option("--node", hist_node);
    report->add_option("--iteration", report_iteration);
    report->add_flag("--plan", plan, "partition of the iteration's window");
    report->add_option("--export", export_table, "dump a table as tab-separated text");

    auto* simulate = app.add_subcommand("simulate", "closed-loop run on a synthetic pool");
    SimConfig sim;
    std::size_t seeds = 1;
    bool compare = false;
    std::string sim_strategy = "mal_mf";
    simulate->add_option("--seed", sim.seed);
    simulate->add_option("--seeds", seeds, "number of seeds, starting at --seed");
    simulate->add_flag("--strategy-compare", compare);
    simulate->add_option("--strategy", sim_strategy)->check(CLI::IsMember({"mal_mf", "random"}));
    simulate->add_option("--classes", sim.classes);
    simulate->add_option("--per-class", sim.per_class);
    simulate->add_option("--dim", sim.dim);
    simulate->add_option("--spread", sim.spread);
    simulate->add_option("--noise", sim.labeler_noise);
    simulate->add_option("--budget", sim.budget);
    simulate->add_option("--iterations", sim.iterations);
    simulate->add_option("--groups", sim.group_sizes, "labelers per group");

    app.add_subcommand("serve", "run the HTTP API");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        ServiceConfig config = config_path.empty() ? ServiceConfig{} : load_config(config_path);
        apply_env_overrides(config);
        if (!store_path.empty()) config.storage = store_path;

        if (app.got_subcommand("simulate")) {
            sim.strategy = strategy_from_string(sim_strategy);
            if (compare) {
                std::vector<std::uint64_t> list;
                for (std::size_t i = 0; i < seeds; ++i) list.push_back(sim.seed + i);
                const auto c = compare_strategies(sim, list);
                if (as_json) std::cout << to_json(c).dump(2) << "\n";
                else std::cout << format_comparison(c);
            } else {
                json all = json::array();
                for (std::size_t i = 0; i < seeds; ++i) {
                    SimConfig c = sim;
                    c.seed = sim.seed + i;
                    const auto r = run_simulation(c);
                    if (as_json) all.push_back(to_json(r));
                    else std::cout << format_sim_report(r);
                }
                if (as_json) std::cout << all.dump(2) << "\n";
            }
            return 0;
        }

        Store store(config.storage);
        store.migrate();
        sync_labelers(store, config);

        if (app.got_subcommand("migrate")) {
            if (as_json) std::cout << json{{"schema_version", store.schema_version()}}.dump() << "\n";
            else std::cout << "schema version " << store.schema_version() << "\n";
        } else if (app.got_subcommand("ingest")) {
            std::size_t classes_added = 0;
            if (!classes_file.empty()) {
                const auto existing = store.load_ontology();
                for (const auto& name : read_lines(classes_file))
                    if (!existing.find_active(name)) {
                        store.add_class(name);
                        ++classes_added;
                    }
            }
            std::vector<EmbeddingRecord> records;
            if (!sidecar.empty()) {
                std::ifstream in(sidecar, std::ios::binary);
                records = load_sidecar(in);
            } else if (!manifest.empty()) {
                std::ifstream in(manifest);
                records = load_manifest(in);
            }
            const auto path_id = store.ensure_path(media_path);
            std::vector<AudioRecord> audios;
            for (const auto& r : records) audios.push_back(audio_from_filename(filename_from_audio_id(r.audio_id), path_id));
            store.add_audios(audios);
            store.put_embeddings(records);
            if (as_json)
                std::cout << json{{"audios", audios.size()}, {"classes_added", classes_added}}.dump() << "\n";
            else
                std::cout << "ingested " << audios.size() << " audios, " << classes_added << " classes\n";
        } else if (app.got_subcommand("iterate")) {
            Engine engine(store, config.engine);
            IterationRequest req{NodeId{node}, parse_iso8601(from), parse_iso8601(to), budget, iteration_id,
                                 strategy_from_string(strategy)};
            const auto rec = engine.run_iteration(req);
            if (as_json) std::cout << to_json(rec).dump(2) << "\n";
            else std::cout << format_iteration_summary(rec);
        } else if (app.got_subcommand("consensus")) {
            const auto outcomes = iteration_consensus(store, consensus_iteration);
            const auto promoted = promote_medoids(store, outcomes, consensus_iteration);
            if (as_json) {
                json list = json::array();
                for (const auto& o : outcomes) list.push_back(to_json(o));
                std::cout << json{{"iteration_id", consensus_iteration}, {"promoted", promoted}, {"outcomes", list}}.dump(2)
                          << "\n";
            } else {
                std::cout << "iteration " << consensus_iteration << ": " << promoted << " of " << outcomes.size()
                          << " proposals promoted to medoids\n";
            }
        } else if (app.got_subcommand("report")) {
            bool did = false;
            if (histogram) {
                did = true;
                HistogramFilter f;
                f.top_k = top;
                if (!hist_node.empty()) f.node = NodeId{hist_node};
                const auto h = store.tag_frequency_histogram(f);
                if (as_json) {
                    std::cout << to_json(h).dump(2) << "\n";
                } else {
                    std::size_t widest = 1;
                    for (const auto& t : h) widest = std::max(widest, t.count);
                    for (const auto& t : h)
                        std::cout << std::setw(24) << std::left << t.name << std::right << std::setw(8) << t.count << "  "
                                  << std::string(std::max<std::size_t>(1, 40 * t.count / widest), '#') << "\n";
                }
            }
            if (report_iteration) {
                did = true;
                const auto rec = store.load_iteration(*report_iteration);
                if (!rec) throw Error(ErrorKind::UnknownIteration, "unknown iteration " + std::to_string(*report_iteration));
                if (plan) {
                    const auto p = store.latest_plan(rec->node_id, rec->window_start, rec->window_end);
                    if (!p) throw Error(ErrorKind::UnknownIteration, "no partition stored for this window");
                    if (as_json) {
                        json sizes = json::array();
                        for (const auto& s : p->sets) sizes.push_back(s.size());
                        std::cout << json{{"plan_id", p->plan_id}, {"n_ds", p->sets.size()}, {"set_sizes", sizes}}.dump(2) << "\n";
                    } else {
                        std::cout << "plan " << p->plan_id << ": " << p->sets.size() << " disjoint sets\n";
                        for (std::size_t j = 0; j < p->sets.size(); ++j)
                            std::cout << "  set " << j + 1 << ": " << p->sets[j].size() << " audios\n";
                    }
                } else if (as_json) {
                    std::cout << to_json(*rec).dump(2) << "\n";
                } else {
                    std::cout << format_iteration_summary(*rec);
                }
            }
            if (!export_table.empty()) {
                did = true;
                store.export_table(export_table, std::cout);
            }
            if (!did) {
                std::cerr << "report: nothing requested (use --histogram, --iteration or --export)\n";
                return 2;
            }
        } else if (app.got_subcommand("serve")) {
            Service service(store, config);
            running_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on " << config.host << ":" << config.port << "\n";
            service.run();
            running_service = nullptr;
        }
    } catch (const Error& e) {
        return report_error(to_string(e.kind()), e.what());
    } catch (const std::exception& e) {
        return report_error("Internal", e.what());
    }
    return 0;
}
