#include "negrasp/io.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "negrasp/version.hpp"

namespace negrasp {
namespace {

using Json = nlohmann::ordered_json;

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Json j;
  in >> j;
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

Json grasp_to_json(const GraspPose& g) {
  return Json{{"omega", {g.omega.x(), g.omega.y(), g.omega.z()}},
              {"tau", {g.tau.x(), g.tau.y(), g.tau.z()}},
              {"width", g.width}};
}

GraspPose grasp_from_json(const Json& j) {
  GraspPose g;
  for (int k = 0; k < 3; ++k) {
    g.omega(k) = j.at("omega").at(k).get<double>();
    g.tau(k) = j.at("tau").at(k).get<double>();
  }
  g.width = j.at("width").get<double>();
  return g;
}

std::string sidecar_path(const std::string& manifest_path) {
  const std::size_t dot = manifest_path.find_last_of('.');
  const std::size_t slash = manifest_path.find_last_of('/');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) {
    return manifest_path.substr(0, dot) + ".bin";
  }
  return manifest_path + ".bin";
}

}  // namespace

void save_grasps(const std::string& path,
                 const std::vector<GraspPose>& grasps) {
  Json arr = Json::array();
  for (const GraspPose& g : grasps) arr.push_back(grasp_to_json(g));
  write_text_file(path, arr.dump(2) + "\n");
}

std::vector<GraspPose> load_grasps(const std::string& path) {
  const Json arr = read_json_file(path);
  if (!arr.is_array()) throw std::runtime_error(path + ": not a grasp array");
  std::vector<GraspPose> out;
  out.reserve(arr.size());
  for (const Json& j : arr) out.push_back(grasp_from_json(j));
  return out;
}

void save_scene(const std::string& path, const GraspScene& scene) {
  Json j;
  j["id"] = scene.id;
  Json points = Json::array();
  for (const Vec3& p : scene.cloud.points) {
    points.push_back({p.x(), p.y(), p.z()});
  }
  j["points"] = std::move(points);
  j["labels"] = scene.cloud.object_labels;
  Json names;
  for (const auto& [label, name] : scene.cloud.object_names) {
    names[std::to_string(label)] = name;
  }
  j["names"] = std::move(names);
  Json prompts;
  for (const auto& [noun, prompt] : scene.prompts) prompts[noun] = prompt;
  j["prompts"] = std::move(prompts);
  Json grasps;
  for (const auto& [noun, list] : scene.grasps) {
    Json arr = Json::array();
    for (const GraspPose& g : list) arr.push_back(grasp_to_json(g));
    grasps[noun] = std::move(arr);
  }
  j["grasps"] = std::move(grasps);
  Json masks;
  for (const auto& [noun, mask] : scene.masks) masks[noun] = mask;
  j["masks"] = std::move(masks);
  write_text_file(path, j.dump(2) + "\n");
}

GraspScene load_scene(const std::string& path) {
  const Json j = read_json_file(path);
  GraspScene scene;
  scene.id = j.value("id", std::string());
  for (const Json& p : j.at("points")) {
    scene.cloud.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(),
                                    p.at(2).get<double>());
  }
  scene.cloud.object_labels = j.at("labels").get<std::vector<int>>();
  for (const auto& [key, value] : j.at("names").items()) {
    scene.cloud.object_names[std::stoi(key)] = value.get<std::string>();
  }
  if (j.contains("prompts")) {
    for (const auto& [noun, prompt] : j.at("prompts").items()) {
      scene.prompts[noun] = prompt.get<std::string>();
    }
  }
  for (const auto& [noun, arr] : j.at("grasps").items()) {
    std::vector<GraspPose> list;
    for (const Json& g : arr) list.push_back(grasp_from_json(g));
    scene.grasps[noun] = std::move(list);
  }
  for (const auto& [noun, mask] : j.at("masks").items()) {
    scene.masks[noun] = mask.get<std::vector<int>>();
  }
  return scene;
}

void save_depth(const std::string& path, const DepthMap& depth) {
  Json header{{"width", depth.width},
              {"height", depth.height},
              {"dtype", "f32le"}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << header.dump() << "\n";
  out.write(reinterpret_cast<const char*>(depth.data.data()),
            static_cast<std::streamsize>(depth.data.size() * sizeof(float)));
}

DepthMap load_depth(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  const Json header = Json::parse(line);
  if (header.value("dtype", std::string()) != "f32le") {
    throw std::runtime_error(path + ": unsupported depth dtype");
  }
  DepthMap depth;
  depth.width = header.at("width").get<int>();
  depth.height = header.at("height").get<int>();
  depth.data.resize(static_cast<std::size_t>(depth.width) * depth.height);
  in.read(reinterpret_cast<char*>(depth.data.data()),
          static_cast<std::streamsize>(depth.data.size() * sizeof(float)));
  if (!in) throw std::runtime_error(path + ": truncated depth payload");
  return depth;
}

namespace {

void append_arrays(const DenoiserParams& params, const std::string& prefix,
                   Json& index, std::vector<double>& blob) {
  visit_params(params, [&](const char* name, const MatX& m) {
    Json entry;
    entry["name"] = prefix + name;
    entry["rows"] = static_cast<int>(m.rows());
    entry["cols"] = static_cast<int>(m.cols());
    entry["offset"] = blob.size();
    index.push_back(std::move(entry));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) blob.push_back(m(r, c));
    }
  });
}

void read_arrays(DenoiserParams& params, const std::string& prefix,
                 const Json& index, const std::vector<double>& blob) {
  std::size_t pos = 0;
  visit_params(params, [&](const char* name, MatX& m) {
    const Json& entry = index.at(pos++);
    if (entry.at("name").get<std::string>() != prefix + name) {
      throw std::runtime_error("checkpoint: array order mismatch at " +
                               std::string(name));
    }
    const int rows = entry.at("rows").get<int>();
    const int cols = entry.at("cols").get<int>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    m.resize(rows, cols);
    std::size_t k = offset;
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r) m(r, c) = blob.at(k++);
    }
  });
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  Json j;
  j["format"] = "negrasp-checkpoint-v1";
  j["version"] = kVersionString;
  j["config"] = Json{{"embed_dim", ckpt.params.config.embed_dim},
                     {"time_dim", ckpt.params.config.time_dim},
                     {"num_tokens", ckpt.params.config.num_tokens},
                     {"num_heads", ckpt.params.config.num_heads}};
  j["vocabulary"] = ckpt.params.config.vocabulary;
  j["seed"] = ckpt.seed;
  j["epochs_done"] = ckpt.epochs_done;
  j["opt_step"] = ckpt.opt.step;
  j["schedule"] = Json{{"steps", ckpt.schedule_steps},
                       {"beta_start", ckpt.beta_start},
                       {"beta_end", ckpt.beta_end}};
  std::vector<double> mean(7), scale(7);
  for (int k = 0; k < 7; ++k) {
    mean[k] = ckpt.norm.mean(k);
    scale[k] = ckpt.norm.scale(k);
  }
  j["normalization"] = Json{{"mean", mean}, {"scale", scale}};

  Json index = Json::array();
  std::vector<double> blob;
  append_arrays(ckpt.params, "", index, blob);
  append_arrays(ckpt.opt.m, "adam.m.", index, blob);
  append_arrays(ckpt.opt.v, "adam.v.", index, blob);
  j["arrays"] = std::move(index);
  const std::string bin = sidecar_path(path);
  j["bin"] = bin.substr(bin.find_last_of('/') + 1);

  write_text_file(path, j.dump(2) + "\n");
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + bin);
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(double)));
}

Checkpoint load_checkpoint(const std::string& path) {
  const Json j = read_json_file(path);
  if (j.value("format", std::string()) != "negrasp-checkpoint-v1") {
    throw std::runtime_error(path + ": not a checkpoint manifest");
  }
  Checkpoint ckpt;
  DenoiserConfig cfg;
  cfg.embed_dim = j.at("config").at("embed_dim").get<int>();
  cfg.time_dim = j.at("config").at("time_dim").get<int>();
  cfg.num_tokens = j.at("config").at("num_tokens").get<int>();
  cfg.num_heads = j.at("config").at("num_heads").get<int>();
  cfg.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  ckpt.seed = j.at("seed").get<std::uint64_t>();
  ckpt.epochs_done = j.at("epochs_done").get<int>();
  ckpt.schedule_steps = j.at("schedule").at("steps").get<int>();
  ckpt.beta_start = j.at("schedule").at("beta_start").get<double>();
  ckpt.beta_end = j.at("schedule").at("beta_end").get<double>();
  for (int k = 0; k < 7; ++k) {
    ckpt.norm.mean(k) = j.at("normalization").at("mean").at(k).get<double>();
    ckpt.norm.scale(k) = j.at("normalization").at("scale").at(k).get<double>();
  }

  const std::string bin = sidecar_path(path);
  std::ifstream in(bin, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open " + bin);
  const std::streamsize bytes = in.tellg();
  in.seekg(0);
  std::vector<double> blob(static_cast<std::size_t>(bytes) / sizeof(double));
  in.read(reinterpret_cast<char*>(blob.data()), bytes);

  ckpt.params.config = cfg;
  ckpt.opt.m.config = cfg;
  ckpt.opt.v.config = cfg;
  Json index = j.at("arrays");
  const std::size_t per_struct = index.size() / 3;
  Json params_index = Json::array(), m_index = Json::array(),
       v_index = Json::array();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (i < per_struct) {
      params_index.push_back(index[i]);
    } else if (i < 2 * per_struct) {
      m_index.push_back(index[i]);
    } else {
      v_index.push_back(index[i]);
    }
  }
  read_arrays(ckpt.params, "", params_index, blob);
  read_arrays(ckpt.opt.m, "adam.m.", m_index, blob);
  read_arrays(ckpt.opt.v, "adam.v.", v_index, blob);
  ckpt.opt.step = j.at("opt_step").get<long>();
  return ckpt;
}

RunConfig load_run_config(const std::string& path) {
  const Json j = read_json_file(path);
  RunConfig cfg;
  if (j.contains("model")) {
    const Json& m = j.at("model");
    cfg.model.embed_dim = m.value("embed_dim", cfg.model.embed_dim);
    cfg.model.time_dim = m.value("time_dim", cfg.model.time_dim);
    cfg.model.num_tokens = m.value("num_tokens", cfg.model.num_tokens);
    cfg.model.num_heads = m.value("num_heads", cfg.model.num_heads);
  }
  if (j.contains("schedule")) {
    const Json& s = j.at("schedule");
    cfg.schedule_steps = s.value("steps", cfg.schedule_steps);
    cfg.beta_start = s.value("beta_start", cfg.beta_start);
    cfg.beta_end = s.value("beta_end", cfg.beta_end);
  }
  if (j.contains("train")) {
    const Json& t = j.at("train");
    cfg.train.loss_ratio_zeta = t.value("loss_ratio_zeta", cfg.train.loss_ratio_zeta);
    cfg.train.p_mask = t.value("p_mask", cfg.train.p_mask);
    cfg.train.lr = t.value("lr", cfg.train.lr);
    cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.seed = t.value("seed", cfg.train.seed);
    cfg.train.freeze_scene_after =
        t.value("freeze_scene_after", cfg.train.freeze_scene_after);
    cfg.train.normalize = t.value("normalize", cfg.train.normalize);
  }
  return cfg;
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  Json j;
  j["model"] = Json{{"embed_dim", cfg.model.embed_dim},
                    {"time_dim", cfg.model.time_dim},
                    {"num_tokens", cfg.model.num_tokens},
                    {"num_heads", cfg.model.num_heads}};
  j["schedule"] = Json{{"steps", cfg.schedule_steps},
                       {"beta_start", cfg.beta_start},
                       {"beta_end", cfg.beta_end}};
  j["train"] = Json{{"loss_ratio_zeta", cfg.train.loss_ratio_zeta},
                    {"p_mask", cfg.train.p_mask},
                    {"lr", cfg.train.lr},
                    {"weight_decay", cfg.train.weight_decay},
                    {"batch_size", cfg.train.batch_size},
                    {"epochs", cfg.train.epochs},
                    {"seed", cfg.train.seed},
                    {"freeze_scene_after", cfg.train.freeze_scene_after},
                    {"normalize", cfg.train.normalize}};
  write_text_file(path, j.dump(2) + "\n");
}

void save_eval_report(const std::string& json_path, const std::string& csv_path,
                      const EvalReport& report) {
  Json j;
  j["cr"] = report.cr;
  j["emd"] = report.emd;
  j["cfr"] = report.cfr;
  j["it_seconds_per_1000"] = report.it_seconds;
  j["delta"] = report.delta;
  j["distance_weights"] = Json{{"rotation", report.weights.rotation},
                               {"width", report.weights.width}};
  Json scenes = Json::array();
  for (const SceneEval& s : report.per_scene) {
    scenes.push_back(Json{{"scene_id", s.scene_id},
                          {"prompt", s.prompt},
                          {"cr", s.cr},
                          {"emd", s.emd},
                          {"cfr", s.cfr},
                          {"detected", s.detected_count},
                          {"truth", s.truth_count}});
  }
  j["per_scene"] = std::move(scenes);
  write_text_file(json_path, j.dump(2) + "\n");

  std::ostringstream csv;
  csv << "scene_id,prompt,cr,emd,cfr,detected,truth\n";
  for (const SceneEval& s : report.per_scene) {
    csv << s.scene_id << "," << s.prompt << "," << s.cr << "," << s.emd << ","
        << s.cfr << "," << s.detected_count << "," << s.truth_count << "\n";
  }
  write_text_file(csv_path, csv.str());
}

void append_manifest(const std::string& path, const std::string& command,
                     std::uint64_t seed,
                     const std::vector<std::pair<std::string, std::string>>&
                         fields) {
  Json j;
  j["command"] = command;
  j["seed"] = seed;
  j["version"] = kVersionString;
  j["timestamp_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count();
  for (const auto& [key, value] : fields) j[key] = value;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append " + path);
  out << j.dump() << "\n";
}

}  // namespace negrasp
