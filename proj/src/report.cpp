#include "biofuse/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "biofuse/errors.hpp"

namespace biofuse {

using nlohmann::ordered_json;

namespace {

ordered_json accuracy_object(const std::array<double, kReadouts>& values) {
  ordered_json o = ordered_json::object();
  const auto names = readout_names();
  for (std::size_t i = 0; i < kReadouts; ++i) o[names[i]] = values[i];
  return o;
}

ordered_json config_object(const std::string& text) {
  ordered_json o = ordered_json::object();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    o[line.substr(0, eq)] = ordered_json::parse(line.substr(eq + 3));
  }
  return o;
}

// JSON has no infinities; the ROC endpoints carry them as strings.
ordered_json threshold_value(double t) {
  if (std::isinf(t)) return t > 0 ? "+inf" : "-inf";
  return t;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

}  // namespace

std::array<std::string, kReadouts> readout_names() {
  return {"face", "sig_img", "sig_seq", "audio", "integrated"};
}

std::string report_to_json(const ExperimentReport& r) {
  ordered_json j;
  j["format"] = "biofuse-report";
  j["version"] = 1;
  j["command"] = r.command;
  j["config"] = config_object(r.config_text);
  j["config_fingerprint"] = r.fingerprint;

  ordered_json epochs = ordered_json::array();
  for (const EpochRecord& e : r.history) {
    ordered_json row;
    row["epoch"] = e.train.epoch;
    row["train_loss"] = e.train.train_loss;
    row["train_accuracy"] = accuracy_object(e.train.train_accuracy);
    if (e.has_eval) {
      row["eval_far"] = e.eval_far;
      row["eval_frr"] = e.eval_frr;
    } else {
      row["eval_far"] = nullptr;
      row["eval_frr"] = nullptr;
    }
    epochs.push_back(row);
  }
  j["epochs"] = epochs;

  j["accuracy"] = r.has_accuracy ? accuracy_object(r.accuracy) : ordered_json(nullptr);

  if (r.has_verification) {
    const VerificationSummary& v = r.verification;
    ordered_json ver;
    ver["genuine_trials"] = v.genuine_trials;
    ver["impostor_trials"] = v.impostor_trials;
    ver["accuracy"] = v.accuracy;
    ver["threshold"] = 0.0;
    ver["far"] = v.far;
    ver["frr"] = v.frr;
    ver["eer"] = v.eer.eer;
    ver["eer_threshold"] = v.eer.threshold;
    ver["auc"] = v.roc.auc;
    ordered_json table = ordered_json::array();
    for (const RocPoint& p : v.roc.points)
      table.push_back({{"threshold", threshold_value(p.threshold)}, {"far", p.fpr}, {"frr", 1.0 - p.tpr}});
    ver["far_frr_table"] = table;
    j["verification"] = ver;
  } else {
    j["verification"] = nullptr;
  }
  j["wall_time_seconds"] = r.wall_time_seconds;
  return j.dump(2) + "\n";
}

std::string render_report_text(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const ordered_json::parse_error& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  if (j.value("format", "") != "biofuse-report") throw FormatError("report: not a biofuse report");

  std::ostringstream out;
  out << "command: " << j.value("command", "") << "\n";
  const auto names = readout_names();
  if (!j["epochs"].empty()) {
    out << "epoch  loss      ";
    for (const auto& n : names) out << n << std::string(11 - std::min<std::size_t>(n.size(), 10), ' ');
    out << "eval_far   eval_frr\n";
    for (const auto& e : j["epochs"]) {
      out << fmt("%5.0f  ", e["epoch"].get<double>()) << fmt("%-9.5f ", e["train_loss"].get<double>());
      for (const auto& n : names) out << fmt("%-11.4f", e["train_accuracy"][n].get<double>());
      if (e["eval_far"].is_null()) {
        out << "-          -\n";
      } else {
        out << fmt("%-11.4f", e["eval_far"].get<double>()) << fmt("%.4f", e["eval_frr"].get<double>()) << "\n";
      }
    }
  }
  if (!j["accuracy"].is_null()) {
    out << "classification accuracy:";
    for (const auto& n : names) out << " " << n << "=" << fmt("%.4f", j["accuracy"][n].get<double>());
    out << "\n";
  }
  if (!j["verification"].is_null()) {
    const auto& v = j["verification"];
    out << "verification: accuracy=" << fmt("%.4f", v["accuracy"].get<double>())
        << " far=" << fmt("%.4f", v["far"].get<double>()) << " frr=" << fmt("%.4f", v["frr"].get<double>())
        << " eer=" << fmt("%.4f", v["eer"].get<double>()) << " auc=" << fmt("%.4f", v["auc"].get<double>())
        << " trials=" << v["genuine_trials"].get<std::size_t>() << "+" << v["impostor_trials"].get<std::size_t>()
        << "\n";
  }
  out << "wall time: " << fmt("%.2f", j.value("wall_time_seconds", 0.0)) << " s\n";
  return out.str();
}

}  // namespace biofuse
