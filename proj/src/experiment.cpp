#include "basil/experiment.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "basil/acds.hpp"
#include "basil/baselines.hpp"
#include "basil/basil_plus.hpp"
#include "basil/errors.hpp"
#include "basil/history_io.hpp"
#include "basil/idx.hpp"
#include "basil/random.hpp"

namespace basil {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kSchemes = {"basil", "basil-plus", "r-plain", "g-plain", "r-plain-plus", "ubar"};

bool grouped(const std::string& s) { return s == "basil-plus" || s == "r-plain-plus"; }
bool graph_scheme(const std::string& s) { return s == "g-plain" || s == "ubar"; }

// Typed access with field paths in every error message.
class Reader {
public:
    Reader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ConfigError("field '" + (prefix_.empty() ? "<root>" : prefix_) + "': expected an object");
    }

    bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
    std::string path(const char* key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
    [[noreturn]] void fail(const char* key, const std::string& what) const {
        throw ConfigError("field '" + path(key) + "': " + what);
    }

    // json built in code stores 3 as a signed integer, parsed text as unsigned
    static bool natural(const json& v) {
        return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    }
    std::size_t size(const char* key, std::size_t def) const {
        if (!has(key)) return def;
        const auto& v = j_.at(key);
        if (!natural(v)) fail(key, "expected a nonnegative integer");
        return v.get<std::size_t>();
    }
    std::uint64_t u64(const char* key, std::uint64_t def) const {
        if (!has(key)) return def;
        const auto& v = j_.at(key);
        if (!natural(v)) fail(key, "expected a nonnegative integer");
        return v.get<std::uint64_t>();
    }
    double number(const char* key, double def) const {
        if (!has(key)) return def;
        const auto& v = j_.at(key);
        if (!v.is_number()) fail(key, "expected a number");
        return v.get<double>();
    }
    int integer(const char* key, int def) const {
        if (!has(key)) return def;
        const auto& v = j_.at(key);
        if (!v.is_number_integer()) fail(key, "expected an integer");
        return v.get<int>();
    }
    bool boolean(const char* key, bool def) const {
        if (!has(key)) return def;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) fail(key, "expected true or false");
        return v.get<bool>();
    }
    std::string string(const char* key, const std::string& def) const {
        if (!has(key)) return def;
        const auto& v = j_.at(key);
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }
    std::vector<double> numbers(const char* key) const {
        std::vector<double> out;
        if (!has(key)) return out;
        const auto& v = j_.at(key);
        if (!v.is_array()) fail(key, "expected an array of numbers");
        for (const auto& x : v) {
            if (!x.is_number()) fail(key, "expected an array of numbers");
            out.push_back(x.get<double>());
        }
        return out;
    }
    std::vector<std::size_t> sizes(const char* key) const {
        std::vector<std::size_t> out;
        if (!has(key)) return out;
        const auto& v = j_.at(key);
        if (!v.is_array()) fail(key, "expected an array of nonnegative integers");
        for (const auto& x : v) {
            if (!natural(x)) fail(key, "expected an array of nonnegative integers");
            out.push_back(x.get<std::size_t>());
        }
        return out;
    }
    Reader sub(const char* key) const {
        static const json empty = json::object();
        if (!has(key)) return Reader(empty, path(key));
        return Reader(j_.at(key), path(key));
    }

    template <class F>
    auto parse(const char* key, const std::string& def, F f) const {
        std::string s = string(key, def);
        try {
            return f(s);
        } catch (const ConfigError& e) {
            fail(key, e.what());
        }
    }

private:
    const json& j_;
    std::string prefix_;
};

fs::path resolve(const fs::path& p, const fs::path& base) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return fs::weakly_canonical(base / p);
}

std::string lr_kind(const LrSchedule& lr) {
    return lr.kind == LrSchedule::Kind::constant ? "constant" : "inverse-decay";
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
    Reader r(j, "");
    ExperimentConfig c;
    c.schema_version = r.integer("schema_version", kSchemaVersion);
    if (c.schema_version != kSchemaVersion)
        r.fail("schema_version", "unsupported version " + std::to_string(c.schema_version));
    c.name = r.string("name", c.name);
    c.scheme = r.string("scheme", c.scheme);

    Reader d = r.sub("dataset");
    c.dataset.kind = d.string("kind", c.dataset.kind);
    c.dataset.train_images = resolve(d.string("train_images", ""), base_dir);
    c.dataset.train_labels = resolve(d.string("train_labels", ""), base_dir);
    c.dataset.test_images = resolve(d.string("test_images", ""), base_dir);
    c.dataset.test_labels = resolve(d.string("test_labels", ""), base_dir);
    c.dataset.train_limit = d.size("train_limit", 0);
    c.dataset.test_limit = d.size("test_limit", 0);
    auto& sy = c.dataset.synthetic;
    sy.dim = d.size("dim", c.dataset.kind == "quadratic" ? c.dataset.dim : sy.dim);
    c.dataset.dim = sy.dim;
    sy.classes = d.integer("classes", sy.classes);
    sy.separation = d.number("separation", sy.separation);
    sy.noise = d.number("noise", sy.noise);
    c.dataset.noise = sy.noise;
    sy.train_samples = d.size("train_samples", sy.train_samples);
    sy.test_samples = d.size("test_samples", sy.test_samples);
    c.dataset.samples = d.size("samples", c.dataset.samples);
    c.dataset.centre_scale = d.number("centre_scale", c.dataset.centre_scale);

    c.partition = r.parse("partition", "iid", parse_partition_mode);
    Reader t = r.sub("task");
    c.task = t.parse("kind", "softmax-regression", parse_task_kind);
    auto hidden = t.sizes("hidden");
    if (!hidden.empty()) {
        if (hidden.size() != 2) t.fail("hidden", "expected two layer widths");
        c.hidden1 = hidden[0];
        c.hidden2 = hidden[1];
    }
    c.curvature = t.numbers("curvature");

    c.nodes = r.size("nodes", 0);
    c.byzantine = r.size("byzantine", 0);
    for (auto v : r.sizes("byzantine_ids")) c.byzantine_ids.push_back(static_cast<NodeId>(v));
    c.connectivity = r.size("connectivity", 0);
    c.dropouts = r.size("dropouts", 0);
    c.groups = r.size("groups", 1);
    c.tau = r.size("tau", 1);
    c.local_epochs = r.size("local_epochs", 0);

    Reader g = r.sub("graph");
    c.p_benign = g.number("p_benign", c.p_benign);
    c.p_byzantine = g.number("p_byzantine", c.p_byzantine);
    c.ubar_rho = g.number("ubar_rho", c.ubar_rho);
    c.ubar_alpha = g.number("ubar_alpha", c.ubar_alpha);

    Reader a = r.sub("attack");
    c.attack = AttackSpec::of(a.parse("kind", "none", parse_attack_kind));
    c.attack.activation_round = a.size("activation_round", c.attack.activation_round);

    c.rounds = r.size("rounds", 0);
    c.batch_size = r.size("batch_size", c.batch_size);
    Reader lr = r.sub("lr");
    std::string sched = lr.string("schedule", "inverse-decay");
    if (sched == "constant")
        c.lr = LrSchedule::constant(lr.number("base", 0.03));
    else if (sched == "inverse-decay")
        c.lr = LrSchedule{LrSchedule::Kind::inverse_decay, lr.number("base", 0.03), lr.number("decay", 0.03)};
    else
        lr.fail("schedule", "expected 'inverse-decay' or 'constant'");
    c.seed = r.u64("seed", 0);

    Reader ac = r.sub("acds");
    c.acds.enabled = ac.boolean("enabled", false);
    c.acds.alpha = ac.number("alpha", c.acds.alpha);
    c.acds.batches = ac.size("batches", c.acds.batches);
    c.acds.groups = ac.size("groups", c.acds.groups);
    c.acds.bits_per_sample = ac.number("bits_per_sample", 0.0);

    Reader se = r.sub("sensitivity");
    c.sensitivity = se.string("mode", "none");
    c.sensitivity_gamma = se.number("gamma", 1.0);

    Reader o = r.sub("output");
    c.output_directory = o.string("directory", c.name);
    c.accuracy_series = o.boolean("accuracy_series", true);
    Reader ev = r.sub("evaluation");
    c.test_every = ev.size("test_every", 1);
    c.test_subset = ev.size("test_subset", 0);
    return c;
}

json ExperimentConfig::to_json() const {
    json j;
    j["schema_version"] = schema_version;
    j["name"] = name;
    j["scheme"] = scheme;
    json d{{"kind", dataset.kind}};
    if (dataset.kind == "idx") {
        d["train_images"] = dataset.train_images.string();
        d["train_labels"] = dataset.train_labels.string();
        d["test_images"] = dataset.test_images.string();
        d["test_labels"] = dataset.test_labels.string();
        d["train_limit"] = dataset.train_limit;
        d["test_limit"] = dataset.test_limit;
    } else if (dataset.kind == "synthetic") {
        const auto& s = dataset.synthetic;
        d["dim"] = s.dim;
        d["classes"] = s.classes;
        d["separation"] = s.separation;
        d["noise"] = s.noise;
        d["train_samples"] = s.train_samples;
        d["test_samples"] = s.test_samples;
    } else {
        d["dim"] = dataset.dim;
        d["samples"] = dataset.samples;
        d["noise"] = dataset.noise;
        d["centre_scale"] = dataset.centre_scale;
    }
    j["dataset"] = d;
    j["partition"] = to_string(partition);
    j["task"] = {{"kind", to_string(task)}, {"hidden", {hidden1, hidden2}}, {"curvature", curvature}};
    j["nodes"] = nodes;
    j["byzantine"] = byzantine;
    j["byzantine_ids"] = byzantine_ids;
    j["connectivity"] = connectivity;
    j["dropouts"] = dropouts;
    j["groups"] = groups;
    j["tau"] = tau;
    j["local_epochs"] = local_epochs;
    j["graph"] = {{"p_benign", p_benign}, {"p_byzantine", p_byzantine}, {"ubar_rho", ubar_rho}, {"ubar_alpha", ubar_alpha}};
    j["attack"] = {{"kind", to_string(attack.kind)}, {"activation_round", attack.activation_round}};
    j["rounds"] = rounds;
    j["batch_size"] = batch_size;
    j["lr"] = {{"schedule", lr_kind(lr)}, {"base", lr.base}, {"decay", lr.decay}};
    j["seed"] = seed;
    j["acds"] = {{"enabled", acds.enabled},
                 {"alpha", acds.alpha},
                 {"batches", acds.batches},
                 {"groups", acds.groups},
                 {"bits_per_sample", acds.bits_per_sample}};
    j["sensitivity"] = {{"mode", sensitivity}, {"gamma", sensitivity_gamma}};
    j["output"] = {{"directory", output_directory.string()}, {"accuracy_series", accuracy_series}};
    j["evaluation"] = {{"test_every", test_every}, {"test_subset", test_subset}};
    return j;
}

void ExperimentConfig::validate() const {
    auto bad = [](const std::string& field, const std::string& what) {
        throw ConfigError("field '" + field + "': " + what);
    };
    if (std::find(kSchemes.begin(), kSchemes.end(), scheme) == kSchemes.end()) bad("scheme", "unknown scheme '" + scheme + "'");
    if (nodes == 0) bad("nodes", "required and must be positive");
    if (dataset.kind == "idx") {
        if (dataset.train_images.empty()) bad("dataset.train_images", "required for idx datasets");
        if (dataset.train_labels.empty()) bad("dataset.train_labels", "required for idx datasets");
        if (!fs::exists(dataset.train_images)) bad("dataset.train_images", "file not found: " + dataset.train_images.string());
        if (!fs::exists(dataset.train_labels)) bad("dataset.train_labels", "file not found: " + dataset.train_labels.string());
        if (dataset.test_images.empty() != dataset.test_labels.empty())
            bad("dataset.test_labels", "test images and labels must be given together");
        if (!dataset.test_images.empty() && !fs::exists(dataset.test_images))
            bad("dataset.test_images", "file not found: " + dataset.test_images.string());
        if (!dataset.test_labels.empty() && !fs::exists(dataset.test_labels))
            bad("dataset.test_labels", "file not found: " + dataset.test_labels.string());
    } else if (dataset.kind == "synthetic") {
        if (dataset.synthetic.classes < 2) bad("dataset.classes", "needs at least 2 classes");
        if (dataset.synthetic.dim == 0) bad("dataset.dim", "must be positive");
    } else if (dataset.kind == "quadratic") {
        if (dataset.dim == 0) bad("dataset.dim", "must be positive");
        if (dataset.samples == 0) bad("dataset.samples", "must be positive");
    } else {
        bad("dataset.kind", "expected idx, synthetic or quadratic");
    }
    if ((task == TaskKind::quadratic_convex) != (dataset.kind == "quadratic"))
        bad("task.kind", "the quadratic task pairs with the quadratic dataset only");
    std::size_t b = byzantine_ids.empty() ? byzantine : byzantine_ids.size();
    if (!byzantine_ids.empty() && byzantine != 0 && byzantine != byzantine_ids.size())
        bad("byzantine_ids", "size disagrees with 'byzantine'");
    if (b >= nodes) bad("byzantine", "must be smaller than nodes");
    for (auto id : byzantine_ids)
        if (id == 0 || id > nodes) bad("byzantine_ids", "id " + std::to_string(id) + " out of range");
    if (scheme == "basil" && nodes > 1 && connectivity > nodes - 1) bad("connectivity", "must not exceed nodes-1");
    if (dropouts > 0 && scheme != "basil") bad("dropouts", "dropout mode applies to the basil scheme only");
    if (grouped(scheme)) {
        if (groups == 0 || nodes % groups != 0) bad("groups", "must divide nodes");
        if (nodes / groups < 2) bad("groups", "groups need at least two members");
    }
    if (graph_scheme(scheme)) {
        if (p_benign < 0 || p_benign > 1) bad("graph.p_benign", "must lie in [0,1]");
        if (p_byzantine < 0 || p_byzantine > 1) bad("graph.p_byzantine", "must lie in [0,1]");
        if (!(ubar_rho > 0 && ubar_rho <= 1)) bad("graph.ubar_rho", "must lie in (0,1]");
        if (ubar_alpha < 0 || ubar_alpha > 1) bad("graph.ubar_alpha", "must lie in [0,1]");
    }
    if (batch_size == 0) bad("batch_size", "must be positive");
    if (!(lr.base >= 0) || lr.decay < 0) bad("lr", "base and decay must be nonnegative");
    if (acds.enabled) {
        if (acds.groups == 0 || nodes % acds.groups != 0) bad("acds.groups", "must divide nodes");
        if (!(acds.alpha > 0 && acds.alpha < 1)) bad("acds.alpha", "must lie in (0,1)");
        if (acds.batches == 0) bad("acds.batches", "must be positive");
    }
    if (sensitivity != "none" && sensitivity != "label-fraction") bad("sensitivity.mode", "expected none or label-fraction");
    if (sensitivity_gamma < 0 || sensitivity_gamma > 1) bad("sensitivity.gamma", "must lie in [0,1]");
    if (output_directory.empty()) bad("output.directory", "must not be empty");
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    if (j.is_object() && j.contains("config") && j.contains("derived")) j = j.at("config");
    return ExperimentConfig::from_json(j, fs::absolute(path).parent_path());
}

namespace {

struct Loaded {
    Dataset train;
    Dataset test;
    bool has_test = false;
};

Loaded load_data(const ExperimentConfig& c) {
    Loaded out;
    const auto& d = c.dataset;
    if (d.kind == "idx") {
        out.train = load_idx(d.train_images, d.train_labels, d.train_limit);
        if (!d.test_images.empty()) {
            out.test = load_idx(d.test_images, d.test_labels, d.test_limit);
            out.has_test = true;
            int k = std::max(out.train.num_classes(), out.test.num_classes());
            if (out.train.num_classes() != k) out.train = load_idx(d.train_images, d.train_labels, d.train_limit, k);
            if (out.test.num_classes() != k) out.test = load_idx(d.test_images, d.test_labels, d.test_limit, k);
        }
    } else if (d.kind == "synthetic") {
        auto tt = make_gaussian_clusters(d.synthetic, c.seed);
        out.train = std::move(tt.train);
        out.test = std::move(tt.test);
        out.has_test = out.test.size() > 0;
    } else {
        Rng rng = make_rng(c.seed, Stream::dataset, 2);
        std::vector<double> centre(d.dim);
        for (auto& v : centre) v = d.centre_scale * standard_normal(rng);
        out.train = make_quadratic_targets(centre, d.noise, d.samples, c.seed);
    }
    return out;
}

std::vector<std::pair<std::size_t, double>> loss_series(const TrainHistory& h) {
    std::map<std::size_t, std::pair<double, std::size_t>> acc;
    for (const auto& r : h.records) {
        auto& e = acc[r.round];
        e.first += r.train_loss;
        ++e.second;
    }
    std::vector<std::pair<std::size_t, double>> out;
    for (const auto& [round, v] : acc) out.emplace_back(round, v.first / static_cast<double>(v.second));
    return out;
}

struct Artifacts {
    ExperimentResult result;
    std::string history_csv;
    std::string series_csv;
    std::string audit_csv;
    std::string graph_edges;
    json acds_summary;
};

Artifacts simulate_all(const ExperimentConfig& c) {
    c.validate();
    Artifacts art;
    ExperimentResult& res = art.result;
    json derived = json::object();
    json notes = json::array();

    Loaded data = load_data(c);
    if (c.sensitivity == "label-fraction") flag_sensitive_by_label_fraction(data.train, c.sensitivity_gamma, c.seed);
    Dataset train = partition(std::move(data.train), c.nodes, c.partition, c.seed);
    derived["samples_per_node"] = train.node_samples(1).size();
    const Dataset* test = data.has_test ? &data.test : nullptr;

    if (c.acds.enabled) {
        AcdsParams p{c.acds.groups, c.acds.alpha, c.acds.batches, c.acds.bits_per_sample, c.seed};
        auto ids = node_range(c.nodes);
        AcdsPlan plan = plan_acds(ids, train, p);
        SharedPool pool = run_acds(plan, train, c.seed);
        train = with_shared_data(std::move(train), pool);
        art.acds_summary = pool.summary(plan);
        derived["acds_effective_alpha"] = plan.effective_alpha;
        if (plan.effective_alpha != plan.alpha)
            notes.push_back("ACDS batch size rounded down; effective shared fraction " +
                            format_number(plan.effective_alpha));
    }

    TaskSpec ts;
    ts.kind = c.task;
    ts.input_dim = train.feature_dim();
    ts.classes = train.num_classes();
    ts.hidden1 = c.hidden1;
    ts.hidden2 = c.hidden2;
    ts.curvature = c.curvature;
    auto task = make_task(ts);
    ModelVector x0 = task->initial_model(c.seed);

    std::vector<NodeId> byz = c.byzantine_ids;
    std::sort(byz.begin(), byz.end());
    if (byz.empty() && c.byzantine > 0) {
        auto ids = node_range(c.nodes);
        byz = place_byzantine(ids, c.byzantine, c.seed);
    }
    derived["byzantine_ids"] = byz;
    std::size_t b = byz.size();

    RingOptions ro;
    ro.lr = c.lr;
    ro.batch_size = c.batch_size;
    ro.attack = c.attack;
    ro.local_epochs = c.local_epochs;
    ro.test_subset = c.test_subset;
    ro.test_every = c.test_every;

    HistoryLayout layout = HistoryLayout::ring;
    AccuracyAggregate how = AccuracyAggregate::worst;
    if (c.scheme == "basil" || c.scheme == "r-plain") {
        RingConfig rc;
        rc.N = c.nodes;
        rc.b = b;
        rc.d = c.dropouts;
        rc.seed = c.seed;
        rc.byzantine = byz;
        if (c.scheme == "basil") {
            rc.S = c.connectivity ? c.connectivity : std::min(c.nodes > 1 ? c.nodes - 1 : 1, b + 1);
            if (rc.d > 0) rc.b = std::max(rc.b, b);
        } else {
            rc.S = 1;
            ro.filtering = false;
        }
        auto ids = node_range(c.nodes);
        RingOrder order = agree_order(ids, c.seed);
        derived["ring_order"] = order.nodes();
        derived["S"] = rc.S;
        RingSimulator sim(rc, order, task, train, test, ro, x0);
        sim.run(c.rounds);
        res.history = std::move(sim.history());
    } else if (grouped(c.scheme)) {
        BasilPlusConfig bp;
        bp.N = c.nodes;
        bp.b = b;
        bp.G = c.groups;
        bp.S = c.connectivity;
        bp.tau = c.tau;
        bp.seed = c.seed;
        bp.byzantine = byz;
        bp.ring = ro;
        res.history = c.scheme == "basil-plus" ? run_basil_plus(bp, task, train, test, c.rounds, x0)
                                               : run_r_plain_plus(bp, task, train, test, c.rounds, x0);
        derived["groups"] = res.history.metadata["groups"];
        derived["S"] = res.history.metadata["S"];
        layout = HistoryLayout::groups;
        how = AccuracyAggregate::mean;
    } else {
        GraphTopology graph = generate_graph(c.nodes, byz, c.p_benign, c.p_byzantine, c.seed);
        GraphOptions go;
        go.lr = c.lr;
        go.batch_size = c.batch_size;
        go.attack = c.attack;
        go.ubar_rho = c.ubar_rho;
        go.ubar_alpha = c.ubar_alpha;
        go.test_subset = c.test_subset;
        go.test_every = c.test_every;
        res.history = c.scheme == "ubar" ? run_ubar(graph, byz, task, train, test, c.rounds, go, x0, c.seed)
                                         : run_g_plain(graph, byz, task, train, test, c.rounds, go, x0, c.seed);
        derived["graph_edges"] = graph.edges().size();
        derived["graph_attempts"] = graph.attempts;
        art.graph_edges = graph.edge_list();
        layout = HistoryLayout::graph;
        if (c.scheme == "ubar") notes.push_back("UBAR mixing weight alpha = " + format_number(c.ubar_alpha));
    }

    if (c.attack.kind == AttackKind::inverse)
        notes.push_back("inverse attack: reflection of the honest step about the prior model; definition chosen here");
    if (c.attack.kind == AttackKind::hidden)
        notes.push_back("hidden attack: benign mean shifted against sign(mean) by the largest benign spread");

    std::ostringstream hist;
    write_history_csv(hist, res.history, layout);
    art.history_csv = hist.str();

    auto series = accuracy_series(res.history, how);
    res.metric_name = how == AccuracyAggregate::worst ? "worst_test_acc" : "mean_test_acc";
    if (series.empty()) {
        series = loss_series(res.history);
        res.metric_name = "mean_train_loss";
    }
    res.final_metric = series.empty() ? std::nan("") : series.back().second;
    std::ostringstream ser;
    write_series_csv(ser, series, res.metric_name);
    art.series_csv = ser.str();
    if (!res.history.audit.empty()) {
        std::ostringstream au;
        write_audit_csv(au, res.history);
        art.audit_csv = au.str();
    } else if (layout == HistoryLayout::ring && c.scheme == "basil") {
        // ring selections live in the records; flatten them into the same audit format
        TrainHistory view;
        for (const auto& r : res.history.records) {
            AuditEntry a;
            a.round = r.round;
            a.stage = "ring";
            a.node = r.node;
            a.selected_sender = r.selected_sender;
            a.selected_malicious = r.selected_malicious;
            a.selected_loss = std::nan("");
            a.min_loss = std::nan("");
            for (std::size_t i = 0; i < r.losses.size() && i < r.stored_senders.size(); ++i) {
                if (r.stored_senders[i] == r.selected_sender && std::isnan(a.selected_loss)) a.selected_loss = r.losses[i];
                if (std::isnan(a.min_loss) || r.losses[i] < a.min_loss) a.min_loss = r.losses[i];
            }
            view.audit.push_back(std::move(a));
        }
        std::ostringstream au;
        write_audit_csv(au, view);
        art.audit_csv = au.str();
    }

    res.manifest["schema_version"] = kSchemaVersion;
    res.manifest["config"] = c.to_json();
    res.manifest["config"]["byzantine_ids"] = byz;  // replay uses the drawn placement verbatim
    res.manifest["derived"] = derived;
    res.manifest["notes"] = notes;
    res.manifest["summary"] = {{"metric", res.metric_name},
                               {"final", format_number(res.final_metric)},
                               {"records", res.history.records.size()},
                               {"protocol_events", res.history.events.size()}};
    return art;
}

}  // namespace

ExperimentResult simulate(const ExperimentConfig& config) { return simulate_all(config).result; }

ExperimentResult run_experiment(const ExperimentConfig& config, const fs::path& output_root) {
    fs::path dir = config.output_directory.is_absolute() ? config.output_directory : output_root / config.output_directory;
    bool created = false;
    std::vector<fs::path> written;
    try {
        Artifacts art = simulate_all(config);
        created = fs::create_directories(dir);
        auto put = [&](const char* name, const std::string& content) {
            fs::path p = dir / name;
            if (!fs::is_directory(p)) written.push_back(p);
            write_text_file(p, content);
        };
        put("history.csv", art.history_csv);
        if (config.accuracy_series) put("accuracy.csv", art.series_csv);
        if (!art.audit_csv.empty()) put("audit.csv", art.audit_csv);
        if (!art.graph_edges.empty()) put("graph.txt", art.graph_edges);
        if (!art.acds_summary.is_null()) put("acds.json", art.acds_summary.dump(2) + "\n");
        json outputs = json::array();
        for (const auto& p : written) outputs.push_back(p.filename().string());  // manifest.json not yet included
        art.result.manifest["outputs"] = outputs;
        put("manifest.json", art.result.manifest.dump(2) + "\n");
        art.result.directory = dir;
        art.result.files = written;
        return std::move(art.result);
    } catch (...) {
        std::error_code ec;
        for (const auto& p : written) fs::remove(p, ec);
        if (created) fs::remove(dir, ec);  // only succeeds if now empty
        throw;
    }
}

}  // namespace basil
