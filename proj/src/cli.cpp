#include "telcos/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "telcos/errors.hpp"
#include "telcos/evalmetrics.hpp"
#include "telcos/groundtruth.hpp"
#include "telcos/losses.hpp"
#include "telcos/netgraph.hpp"
#include "telcos/pipeline.hpp"
#include "telcos/postproc.hpp"
#include "telcos/pruning.hpp"
#include "telcos/scriptid.hpp"
#include "telcos/synthgen.hpp"
#include "telcos/trainer.hpp"
#include "telcos/utils.hpp"

namespace telcos::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("TELCOS_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

json config_to_json(const train::TrainConfig& c, std::uint64_t seed, int threads) {
    json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["initial_lr"] = c.initial_lr;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["adam_eps"] = c.adam_eps;
    j["patience"] = c.patience;
    j["seed"] = seed;
    j["input_size"] = c.input_size;
    j["lambda"] = c.lambda;
    j["theta_s"] = c.theta_s;
    j["sigma_frac"] = c.sigma_frac;
    j["val_fraction"] = c.val_fraction;
    j["distill_temperature"] = c.distill_temperature;
    j["distill_soft_epochs"] = c.distill_soft_epochs;
    j["augment"] = {{"rotate", c.aug.rotate},   {"max_deg", c.aug.max_deg},
                    {"blur", c.aug.blur},       {"saturation", c.aug.saturation},
                    {"gray", c.aug.gray},       {"brightness", c.aug.brightness}};
    j["threads"] = threads;
    return j;
}

void log_resolved(const std::string& sub, const json& j) {
    std::cerr << "telcos: " << sub << " resolved config: " << j.dump() << "\n";
}

// Training config file: JSON mirroring TrainConfig field names. Flags that
// were passed explicitly override file values, so the file is applied first.
void apply_config_file(train::TrainConfig& c, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError("bad config JSON in " + path + ": " + e.what());
    }
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.initial_lr = j.value("initial_lr", c.initial_lr);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.input_size = j.value("input_size", c.input_size);
    c.lambda = j.value("lambda", c.lambda);
    c.theta_s = j.value("theta_s", c.theta_s);
    c.sigma_frac = j.value("sigma_frac", c.sigma_frac);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.distill_temperature = j.value("distill_temperature", c.distill_temperature);
    c.distill_soft_epochs = j.value("distill_soft_epochs", c.distill_soft_epochs);
    if (j.contains("augment")) {
        const json& a = j["augment"];
        c.aug.rotate = a.value("rotate", c.aug.rotate);
        c.aug.max_deg = a.value("max_deg", c.aug.max_deg);
        c.aug.blur = a.value("blur", c.aug.blur);
        c.aug.saturation = a.value("saturation", c.aug.saturation);
        c.aug.gray = a.value("gray", c.aug.gray);
        c.aug.brightness = a.value("brightness", c.aug.brightness);
    }
}

net::Widths widths_from_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open widths file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError("bad widths JSON in " + path + ": " + e.what());
    }
    net::Widths w;
    w.conv1 = j.at("conv1").get<int>();
    auto s = j.at("shuffle_out").get<std::vector<int>>();
    if (s.size() != 4) throw DataError("shuffle_out needs 4 widths");
    std::copy(s.begin(), s.end(), w.shuffle_out.begin());
    w.conv2 = j.at("conv2").get<int>();
    auto u = j.at("upconv_out").get<std::vector<int>>();
    if (u.size() != 3) throw DataError("upconv_out needs 3 widths");
    std::copy(u.begin(), u.end(), w.upconv_out.begin());
    w.conv3 = j.at("conv3").get<int>();
    w.conv4 = j.at("conv4").get<int>();
    w.conv5 = j.at("conv5").get<int>();
    return w;
}

net::NetworkSpec network_from_config(const std::string& config, const std::string& widths_file,
                                     std::uint64_t seed) {
    net::NetworkSpec netspec;
    if (config == "telcos_plus")
        netspec = net::build_network(net::Config::telcos_plus);
    else if (config == "telcos_stud")
        netspec = net::build_network(net::Config::telcos_stud);
    else if (config == "telcos")
        netspec = net::build_network(net::Config::telcos);
    else if (config == "custom") {
        if (widths_file.empty()) throw DataError("custom config needs --widths <json>");
        netspec = net::build_network(widths_from_json(widths_file));
    } else {
        throw DataError("unknown config " + config);
    }
    net::init_weights(netspec, seed);
    return netspec;
}

std::vector<train::Sample> samples_from_dir(const std::string& manifest_path) {
    synth::Manifest m = synth::load_manifest(manifest_path);
    return train::samples_from_manifest(m, fs::path(manifest_path).parent_path().string());
}

int cmd_synth(const std::string& backgrounds_dir, const std::string& out_dir,
              synth::GenConfig cfg, int threads) {
    std::vector<std::string> backgrounds;
    for (const auto& e : fs::directory_iterator(backgrounds_dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm")
            backgrounds.push_back(e.path().string());
    std::sort(backgrounds.begin(), backgrounds.end());
    json resolved;
    resolved["count"] = cfg.count;
    resolved["seed"] = cfg.seed;
    resolved["blur_k"] = cfg.blur_k;
    resolved["canny"] = {cfg.canny_lo, cfg.canny_hi};
    resolved["min_patch"] = cfg.min_patch;
    resolved["split_threshold"] = cfg.split_threshold;
    resolved["place_threshold"] = cfg.place_threshold;
    resolved["threads"] = threads;
    log_resolved("synth", resolved);
    synth::Manifest m = synth::generate_dataset(backgrounds, cfg, out_dir, threads);
    std::cerr << "telcos: synth wrote " << m.pairs.size() << " pairs ("
              << m.skipped_placements << " placements skipped, " << m.skipped_backgrounds
              << " backgrounds unreadable)\n";
    return 0;
}

int cmd_gt(const std::string& ann_path, int size, double theta_s, double sigma_frac,
           const std::string& out_dir) {
    std::vector<gt::WordAnnotation> words = gt::load_annotations(ann_path);
    gt::GroundTruthMaps maps = gt::render_ground_truth(words, size, size, theta_s, sigma_frac);
    fs::create_directories(out_dir);
    save_tensor(maps.region, (fs::path(out_dir) / "region.tlct").string());
    save_tensor(maps.affinity, (fs::path(out_dir) / "affinity.tlct").string());
    save_tensor(maps.script, (fs::path(out_dir) / "script.tlct").string());
    std::cerr << "telcos: gt wrote region/affinity/script maps to " << out_dir << " ("
              << maps.clipped_words << " clipped, " << maps.degenerate_quads << " degenerate)\n";
    return 0;
}

int cmd_infer(const std::string& model_path, const std::string& image_path,
              const std::string& out_path, const std::string& overlay_path, double t_r,
              double t_a, int size, const std::string& scriptid_path,
              const std::string& dump_dir) {
    net::NetworkSpec netspec = net::load_checkpoint(model_path);
    synth::Image original = synth::load_ppm(image_path);
    synth::Image img = original;
    std::vector<gt::WordAnnotation> dummy;
    const double scale = train::resize_pad(img, dummy, size);
    Tensor input = train::image_to_tensor(img);
    std::vector<post::DetectedWord> words = pipeline::detect_words(netspec, input, t_r, t_a);
    for (post::DetectedWord& w : words)
        for (geom::Pt& p : w.quad) p = p * (1.0 / scale);

    if (!dump_dir.empty()) {
        fs::create_directories(dump_dir);
        net::ScoreMaps maps = net::forward(netspec, input, net::Mode::infer);
        save_tensor(maps.script, (fs::path(dump_dir) / "script_logits.tlct").string());
    }

    if (!scriptid_path.empty()) {
        scriptid::ScriptIdModel sid = scriptid::load_model(scriptid_path);
        std::map<std::string, Tensor> taps;
        net::forward(netspec, input, net::Mode::infer, &taps);
        const Tensor& feat = taps.at("conv2");
        const double fscale = static_cast<double>(feat.dim(3)) / input.dim(3);
        post::Routing routing = post::route_words(words);
        // Fine script identification is read-only on the routed "other" words.
        std::vector<std::string> fine;
        for (const post::DetectedWord& w : routing.other) {
            geom::Quad fq = w.quad;
            for (geom::Pt& p : fq) p = p * (scale * fscale);
            Tensor roi = scriptid::roi_features(feat, fq, sid.cfg.roi_h, sid.cfg.roi_w);
            fine.push_back(sid.cfg.labels[static_cast<std::size_t>(scriptid::classify(sid, roi))]);
        }
        json arr = json::array();
        std::size_t oi = 0;
        for (const post::DetectedWord& w : words) {
            json q = json::array();
            for (const geom::Pt& p : w.quad) q.push_back(json::array({p.x, p.y}));
            json e;
            e["quad"] = q;
            e["script"] = gt::to_string(w.script);
            e["confidence"] = w.confidence;
            if (w.flagged) e["flagged"] = true;
            if (w.script == gt::Script::other && oi < fine.size()) e["fine_script"] = fine[oi++];
            arr.push_back(e);
        }
        std::ofstream os(out_path);
        if (!os) throw DataError("cannot write detections: " + out_path);
        os << arr.dump(1) << "\n";
    } else {
        post::detections_to_json(words, out_path);
    }

    if (!overlay_path.empty()) {
        post::draw_overlay(original, words);
        synth::save_ppm(original, overlay_path);
    }
    std::cerr << "telcos: infer found " << words.size() << " words\n";
    return 0;
}

std::vector<std::pair<std::string, std::string>> pair_det_gt(const std::string& det,
                                                             const std::string& gtp) {
    std::vector<std::pair<std::string, std::string>> pairs;
    if (fs::is_directory(det) != fs::is_directory(gtp))
        throw DataError("--det and --gt must both be files or both be directories");
    if (!fs::is_directory(det)) {
        pairs.emplace_back(det, gtp);
        return pairs;
    }
    for (const auto& e : fs::directory_iterator(det)) {
        if (!e.is_regular_file() || e.path().extension() != ".json") continue;
        fs::path g = fs::path(gtp) / e.path().filename();
        if (!fs::exists(g)) throw DataError("no ground truth for " + e.path().string());
        pairs.emplace_back(e.path().string(), g.string());
    }
    std::sort(pairs.begin(), pairs.end());
    if (pairs.empty()) throw DataError("no detection files in " + det);
    return pairs;
}

int cmd_eval(const std::string& det, const std::string& gtp, double iou, bool hungarian,
             const std::string& out_path) {
    eval::Accumulator acc;
    for (const auto& [dfile, gfile] : pair_det_gt(det, gtp)) {
        std::vector<post::DetectedWord> dets = post::detections_from_json(dfile);
        std::vector<gt::WordAnnotation> gts = gt::load_annotations(gfile);
        eval::EvalReport r = eval::match_and_score(
            dets, gts, iou, hungarian ? eval::Matching::hungarian : eval::Matching::greedy);
        acc.add(r, dets, gts);
    }
    eval::EvalReport total = acc.finalize();
    std::printf("P %.2f R %.2f H %.2f\n", 100.0 * total.precision, 100.0 * total.recall,
                100.0 * total.hmean);
    for (const auto& [cls, v] : total.script_accuracy) {
        if (v.has_value())
            std::printf("script %-6s %.2f\n", cls.c_str(), 100.0 * *v);
        else
            std::printf("script %-6s n/a\n", cls.c_str());
    }
    if (!out_path.empty()) eval::report_to_json(total, out_path);
    return 0;
}

int cmd_prune(const std::string& model_path, const std::string& manifest, double k, double x,
              double tau, const std::string& taps_csv, int reps, std::uint64_t seed,
              const train::TrainConfig& tc, int taps_per_iter, int finetune_epochs, double guard,
              double iou, double t_r, double t_a, const std::string& out_dir, int threads,
              const std::string& dump_profile, bool complete_linkage) {
    net::NetworkSpec netspec = net::load_checkpoint(model_path);
    std::vector<train::Sample> samples = samples_from_dir(manifest);
    if (samples.empty()) throw DataError("empty dataset manifest");
    fs::create_directories(out_dir);

    // Representative images sampled across the manifest.
    std::mt19937_64 rng(mix_seed(seed, 0x9e95));
    std::vector<int> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(reps)));
    std::sort(idx.begin(), idx.end());
    std::vector<Tensor> rep_images;
    for (int i : idx) {
        train::LoadedSample ls = train::load_sample(samples[static_cast<std::size_t>(i)]);
        train::resize_pad(ls.image, ls.words, tc.input_size);
        rep_images.push_back(train::image_to_tensor(ls.image));
    }

    std::vector<std::string> taps;
    if (taps_csv.empty()) {
        taps = prune::default_prunable_taps(netspec);
    } else {
        std::string cur;
        for (char c : taps_csv + ",") {
            if (c == ',') {
                if (!cur.empty()) taps.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
    }

    json resolved;
    resolved["k"] = k;
    resolved["x"] = x;
    resolved["tau"] = tau;
    resolved["taps"] = taps;
    resolved["reps"] = static_cast<int>(rep_images.size());
    resolved["seed"] = seed;
    resolved["threads"] = threads;
    log_resolved("prune", resolved);

    prune::ActivationProfile profile = prune::collect_activations(netspec, rep_images, taps);
    if (!dump_profile.empty()) {
        fs::create_directories(dump_profile);
        for (const std::string& t : taps)
            for (std::size_t i = 0; i < profile.maps[t].size(); ++i) {
                std::string name = t;
                for (char& ch : name)
                    if (ch == '.') ch = '_';
                save_tensor(profile.maps[t][i],
                            (fs::path(dump_profile) / (name + "_" + std::to_string(i) + ".tlct"))
                                .string());
            }
    }

    prune::PrunePlan plan;
    for (const std::string& t : taps) {
        auto groups = prune::group_channels(profile, t, tau, complete_linkage, threads);
        prune::merge_plan(plan, prune::make_prune_plan(groups, profile, k, x));
    }
    prune::plan_to_json(plan, (fs::path(out_dir) / "plan.json").string());

    net::NetworkSpec pruned;
    if (finetune_epochs > 0) {
        prune::FinetuneOptions opt;
        opt.taps_per_iteration = taps_per_iter;
        opt.epochs_per_iteration = finetune_epochs;
        opt.hmean_guard = guard;
        opt.iou_thresh = iou;
        opt.t_r = t_r;
        opt.t_a = t_a;
        opt.tc = tc;
        opt.tc.out_dir = (fs::path(out_dir) / "finetune").string();
        const std::size_t nval = std::max<std::size_t>(1, samples.size() / 10);
        opt.val_samples.assign(samples.begin(), samples.begin() + static_cast<long>(nval));
        opt.train_samples.assign(samples.begin() + static_cast<long>(nval), samples.end());
        auto [result, report] = prune::apply_and_finetune(netspec, plan, opt);
        pruned = std::move(result);
        json jr;
        jr["params_initial"] = report.params_initial;
        jr["params_final"] = report.params_final;
        json iters = json::array();
        for (const auto& ir : report.iterations)
            iters.push_back({{"taps", ir.taps},
                             {"params_before", ir.params_before},
                             {"params_after", ir.params_after},
                             {"hmean_before", ir.hmean_before},
                             {"hmean_after", ir.hmean_after},
                             {"rolled_back", ir.rolled_back}});
        jr["iterations"] = iters;
        std::ofstream os((fs::path(out_dir) / "prune_report.json").string());
        os << jr.dump(1) << "\n";
    } else {
        prune::PrunePlan closed = prune::propagate_plan(netspec, plan);
        pruned = prune::apply_plan(netspec, closed);
    }
    const std::string out_model = (fs::path(out_dir) / "pruned.tlcs").string();
    net::save_checkpoint(pruned, out_model);
    std::cerr << "telcos: prune " << netspec.param_count() << " -> " << pruned.param_count()
              << " params, model at " << out_model << "\n";
    return 0;
}

int cmd_scriptid(const std::string& crops_dir, const std::string& out_dir,
                 const std::string& teacher_path, bool student, double lambda_t, int epochs,
                 double lr, std::uint64_t seed) {
    auto [crops, labels] = scriptid::load_crops(crops_dir);
    if (crops.empty()) throw DataError("no crops in " + crops_dir);
    fs::create_directories(out_dir);
    scriptid::ScriptIdConfig cfg;
    cfg.labels = labels;
    const int in_ch = crops.front().features.dim(1);

    scriptid::ScriptIdModel teacher;
    const scriptid::ScriptIdModel* teacher_ptr = nullptr;
    if (!teacher_path.empty()) {
        teacher = scriptid::load_model(teacher_path);
        teacher_ptr = &teacher;
    }
    scriptid::ScriptIdModel model = scriptid::make_model(cfg, in_ch, student, seed);
    scriptid::ScriptIdReport report =
        scriptid::train_scriptid(teacher_ptr, model, crops, teacher_ptr ? lambda_t : 0.0, epochs,
                                 lr, seed);
    const std::string model_path =
        (fs::path(out_dir) / (student ? "scriptid_student.tlcs" : "scriptid_teacher.tlcs"))
            .string();
    scriptid::save_model(model, model_path);
    json j;
    j["accuracy"] = report.accuracy;
    j["epochs"] = report.epochs;
    j["loss_hard"] = report.epoch_loss_hard;
    j["loss_soft"] = report.epoch_loss_soft;
    j["model"] = fs::path(model_path).filename().string();
    std::ofstream os((fs::path(out_dir) / "scriptid_report.json").string());
    os << j.dump(1) << "\n";
    std::printf("scriptid accuracy %.4f\n", report.accuracy);
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"TeLCoS: text localization with script clustering"};
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    int threads_flag = 0;
    std::string config_file;
    app.add_option("--seed", seed, "global random seed");
    app.add_option("--threads", threads_flag, "worker threads (or TELCOS_THREADS)");
    app.add_option("--config", config_file, "JSON config file mirroring the training config");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string sy_bg, sy_out;
    synth::GenConfig gen;
    synth_cmd->add_option("--backgrounds", sy_bg, "directory of PPM backgrounds")->required();
    synth_cmd->add_option("--out", sy_out, "output dataset directory")->required();
    synth_cmd->add_option("--count", gen.count, "images to generate")->required();
    synth_cmd->add_option("--blur-k", gen.blur_k, "median blur kernel (odd)");
    synth_cmd->add_option("--canny-lo", gen.canny_lo, "weak edge threshold");
    synth_cmd->add_option("--canny-hi", gen.canny_hi, "strong edge threshold");
    synth_cmd->add_option("--min-patch", gen.min_patch, "quadtree leaf minimum extent");
    synth_cmd->add_option("--split-threshold", gen.split_threshold, "quadtree split density");
    synth_cmd->add_option("--place-threshold", gen.place_threshold, "max density for placement");
    synth_cmd->add_option("--words-min", gen.words_min, "min words per image");
    synth_cmd->add_option("--words-max", gen.words_max, "max words per image");
    synth_cmd->add_option("--len-min", gen.word_len_min, "min word length");
    synth_cmd->add_option("--len-max", gen.word_len_max, "max word length");
    synth_cmd->add_option("--scale-min", gen.glyph_scale_min, "min glyph scale");
    synth_cmd->add_option("--scale-max", gen.glyph_scale_max, "max glyph scale");
    bool no_transforms = false;
    synth_cmd->add_flag("--no-transforms", no_transforms, "place text without distortions");

    // gt
    auto* gt_cmd = app.add_subcommand("gt", "render ground-truth maps from annotations");
    std::string gt_ann, gt_out;
    int gt_size = 128;
    double theta_s = 0.4, sigma_frac = 0.25;
    gt_cmd->add_option("--ann", gt_ann, "annotation JSON")->required();
    gt_cmd->add_option("--out", gt_out, "output directory")->required();
    gt_cmd->add_option("--size", gt_size, "square canvas extent (divisible by 32)");
    gt_cmd->add_option("--theta-s", theta_s, "script threshold");
    gt_cmd->add_option("--sigma-frac", sigma_frac, "gaussian sigma fraction");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a network");
    std::string tr_data, tr_out, tr_config = "custom", tr_widths;
    train::TrainConfig tc;
    train_cmd->add_option("--data", tr_data, "dataset manifest.json")->required();
    train_cmd->add_option("--out", tr_out, "output directory")->required();
    train_cmd->add_option("--net", tr_config,
                          "telcos_plus | telcos_stud | telcos | custom");
    train_cmd->add_option("--widths", tr_widths, "widths JSON for custom config");
    train_cmd->add_option("--epochs", tc.epochs, "training epochs");
    train_cmd->add_option("--batch", tc.batch_size, "batch size");
    train_cmd->add_option("--lr", tc.initial_lr, "initial learning rate (halved per epoch)");
    train_cmd->add_option("--beta1", tc.adam_beta1, "Adam beta1 (0.01 for the literal reading)");
    train_cmd->add_option("--patience", tc.patience, "early stopping patience");
    train_cmd->add_option("--input-size", tc.input_size, "square input extent");
    train_cmd->add_option("--lambda", tc.lambda, "branch weighting");
    train_cmd->add_option("--theta-s", tc.theta_s, "script threshold");
    train_cmd->add_option("--val-fraction", tc.val_fraction, "validation split");
    bool aug_rotate = false, aug_blur = false, aug_sat = false, aug_gray = false,
         aug_bright = false;
    train_cmd->add_flag("--aug-rotate", aug_rotate, "enable rotation augmentation");
    train_cmd->add_flag("--aug-blur", aug_blur, "enable gaussian blur augmentation");
    train_cmd->add_flag("--aug-saturation", aug_sat, "enable saturation augmentation");
    train_cmd->add_flag("--aug-gray", aug_gray, "enable graying augmentation");
    train_cmd->add_flag("--aug-brightness", aug_bright, "enable brightness augmentation");

    // distill
    auto* distill_cmd = app.add_subcommand("distill", "train a student against a teacher");
    std::string di_teacher, di_data, di_out, di_config = "custom", di_widths;
    distill_cmd->add_option("--teacher", di_teacher, "teacher checkpoint")->required();
    distill_cmd->add_option("--data", di_data, "dataset manifest.json")->required();
    distill_cmd->add_option("--out", di_out, "output directory")->required();
    distill_cmd->add_option("--net", di_config, "student config name");
    distill_cmd->add_option("--widths", di_widths, "student widths JSON");
    distill_cmd->add_option("--epochs", tc.epochs, "fine-tune epochs (phase 2)");
    distill_cmd->add_option("--soft-epochs", tc.distill_soft_epochs, "soft-target epochs");
    distill_cmd->add_option("--temperature", tc.distill_temperature, "distillation temperature");
    distill_cmd->add_option("--batch", tc.batch_size, "batch size");
    distill_cmd->add_option("--lr", tc.initial_lr, "initial learning rate");
    distill_cmd->add_option("--input-size", tc.input_size, "square input extent");

    // prune
    auto* prune_cmd = app.add_subcommand("prune", "structural-similarity channel pruning");
    std::string pr_model, pr_data, pr_out, pr_taps, pr_dump;
    double pr_k = 0.2, pr_x = 0.1, pr_tau = 0.55, pr_guard = 0.05, pr_iou = 0.5;
    double pr_tr = 0.5, pr_ta = 0.5;
    int pr_reps = 32, pr_iter_taps = 3, pr_ft_epochs = 1;
    bool pr_complete = false;
    prune_cmd->add_option("--model", pr_model, "checkpoint to prune")->required();
    prune_cmd->add_option("--data", pr_data, "dataset manifest.json")->required();
    prune_cmd->add_option("--out", pr_out, "output directory")->required();
    prune_cmd->add_option("--k", pr_k, "total removal fraction per group");
    prune_cmd->add_option("--x", pr_x, "APoZ-selected fraction per group");
    prune_cmd->add_option("--tau", pr_tau, "SSIM grouping threshold");
    prune_cmd->add_option("--taps", pr_taps, "comma-separated tap names");
    prune_cmd->add_option("--reps", pr_reps, "representative image count");
    prune_cmd->add_option("--iter-taps", pr_iter_taps, "taps pruned per iteration");
    prune_cmd->add_option("--finetune-epochs", pr_ft_epochs,
                          "fine-tune epochs per iteration (0 = apply only)");
    prune_cmd->add_option("--guard", pr_guard, "max tolerated H-mean drop per iteration");
    prune_cmd->add_option("--iou", pr_iou, "validation IoU threshold");
    prune_cmd->add_option("--t-r", pr_tr, "region threshold for validation detection");
    prune_cmd->add_option("--t-a", pr_ta, "affinity threshold for validation detection");
    prune_cmd->add_option("--input-size", tc.input_size, "square input extent");
    prune_cmd->add_option("--dump-profile", pr_dump, "dump activation profile tensors here");
    prune_cmd->add_flag("--complete-linkage", pr_complete, "complete-linkage grouping");

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "detect words in one image");
    std::string in_model, in_image, in_out, in_overlay, in_scriptid, in_dump;
    double in_tr = 0.5, in_ta = 0.5;
    int in_size = 768;
    infer_cmd->add_option("--model", in_model, "checkpoint")->required();
    infer_cmd->add_option("--image", in_image, "input PPM image")->required();
    infer_cmd->add_option("--out", in_out, "detection JSON path")->required();
    infer_cmd->add_option("--overlay", in_overlay, "overlay PPM path");
    infer_cmd->add_option("--t-r", in_tr, "region threshold");
    infer_cmd->add_option("--t-a", in_ta, "affinity threshold");
    infer_cmd->add_option("--size", in_size, "network input extent");
    infer_cmd->add_option("--scriptid", in_scriptid, "scriptid model for routed words");
    infer_cmd->add_option("--dump-scores", in_dump, "dump raw score tensors here");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score detections against ground truth");
    std::string ev_det, ev_gt, ev_out;
    double ev_iou = 0.8;
    bool ev_hungarian = false;
    eval_cmd->add_option("--det", ev_det, "detection JSON file or directory")->required();
    eval_cmd->add_option("--gt", ev_gt, "annotation JSON file or directory")->required();
    eval_cmd->add_option("--iou", ev_iou, "IoU threshold (strictly greater)");
    eval_cmd->add_flag("--hungarian", ev_hungarian, "Hungarian matching");
    eval_cmd->add_option("--out", ev_out, "write the full report JSON here");

    // scriptid
    auto* sid_cmd = app.add_subcommand("scriptid", "train the script identification module");
    std::string sid_crops, sid_out, sid_teacher;
    bool sid_student = false;
    double sid_lambda = 0.7, sid_lr = 0.003;
    int sid_epochs = 10;
    sid_cmd->add_option("--crops", sid_crops, "crop dataset directory")->required();
    sid_cmd->add_option("--out", sid_out, "output directory")->required();
    sid_cmd->add_option("--teacher", sid_teacher, "teacher model for distillation");
    sid_cmd->add_flag("--student", sid_student, "build the LSH-projection student");
    sid_cmd->add_option("--lambda-t", sid_lambda, "teacher-loss weight");
    sid_cmd->add_option("--epochs", sid_epochs, "training epochs");
    sid_cmd->add_option("--lr", sid_lr, "learning rate");

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") {
            std::cout << app.help();
            return 0;
        }
        std::cerr << "error: usage: " << e.what() << "\n";
        std::cerr << app.help();
        return 1;
    }

    const int threads = resolve_threads(threads_flag);

    try {
        if (!config_file.empty()) apply_config_file(tc, config_file);
        if (seed != 1 || tc.seed == 1) tc.seed = seed;
        tc.aug.rotate = tc.aug.rotate || aug_rotate;
        tc.aug.blur = tc.aug.blur || aug_blur;
        tc.aug.saturation = tc.aug.saturation || aug_sat;
        tc.aug.gray = tc.aug.gray || aug_gray;
        tc.aug.brightness = tc.aug.brightness || aug_bright;

        if (*synth_cmd) {
            gen.seed = seed;
            gen.allow_transforms = !no_transforms;
            return cmd_synth(sy_bg, sy_out, gen, threads);
        }
        if (*gt_cmd) return cmd_gt(gt_ann, gt_size, theta_s, sigma_frac, gt_out);
        if (*train_cmd) {
            tc.out_dir = tr_out;
            log_resolved("train", config_to_json(tc, tc.seed, threads));
            net::NetworkSpec netspec = network_from_config(tr_config, tr_widths, tc.seed);
            std::vector<train::Sample> samples = samples_from_dir(tr_data);
            train::TrainReport report = train::train(netspec, samples, tc);
            train::report_to_json(report, (fs::path(tr_out) / "report.json").string());
            std::cerr << "telcos: train finished in " << report.wall_time_sec << "s, checkpoint "
                      << report.final_checkpoint << "\n";
            return 0;
        }
        if (*distill_cmd) {
            tc.out_dir = di_out;
            log_resolved("distill", config_to_json(tc, tc.seed, threads));
            net::NetworkSpec teacher = net::load_checkpoint(di_teacher);
            net::NetworkSpec student = network_from_config(di_config, di_widths, tc.seed);
            std::vector<train::Sample> samples = samples_from_dir(di_data);
            train::TrainReport report = train::distill_train(teacher, student, samples, tc);
            train::report_to_json(report, (fs::path(di_out) / "report.json").string());
            std::cerr << "telcos: distill finished in " << report.wall_time_sec
                      << "s, checkpoint " << report.final_checkpoint << "\n";
            return 0;
        }
        if (*prune_cmd) {
            tc.out_dir = pr_out;
            return cmd_prune(pr_model, pr_data, pr_k, pr_x, pr_tau, pr_taps, pr_reps, tc.seed, tc,
                             pr_iter_taps, pr_ft_epochs, pr_guard, pr_iou, pr_tr, pr_ta, pr_out,
                             threads, pr_dump, pr_complete);
        }
        if (*infer_cmd)
            return cmd_infer(in_model, in_image, in_out, in_overlay, in_tr, in_ta, in_size,
                             in_scriptid, in_dump);
        if (*eval_cmd) return cmd_eval(ev_det, ev_gt, ev_iou, ev_hungarian, ev_out);
        if (*sid_cmd)
            return cmd_scriptid(sid_crops, sid_out, sid_teacher, sid_student, sid_lambda,
                                sid_epochs, sid_lr, seed);
        std::cerr << "error: usage: no subcommand\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "error: numeric: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: data: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: data: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: data: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace telcos::cli
