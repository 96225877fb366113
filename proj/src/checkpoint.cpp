#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "protofuse/error.hpp"
#include "protofuse/harness.hpp"

// Text checkpoint, one record per line:
//   FSLCKPT 1
//   branches <grammar or ->
//   branch_losses <0|1>
//   mlp <name> <in> <hidden> <out> <dropout> <vector|sigmoid>
//   w1|b1|w2|b2 <values...>          (four lines after each mlp record)
//   end

namespace protofuse {
namespace {

void write_tensor(std::ostream& out, std::string_view name, const double* data,
                  Eigen::Index n) {
  std::string line(name);
  for (Eigen::Index i = 0; i < n; ++i) {
    line += ' ';
    line += format_double(data[i]);
  }
  line += '\n';
  out << line;
}

void write_mlp(std::ostream& out, std::string_view name, const MlpParams& p) {
  out << "mlp " << name << ' ' << p.in_dim() << ' ' << p.hidden_dim() << ' '
      << p.out_dim() << ' ' << format_double(p.dropout_rate) << ' '
      << (p.output_kind == OutputKind::kVector ? "vector" : "sigmoid") << '\n';
  write_tensor(out, "w1", p.w1.data(), p.w1.size());
  write_tensor(out, "b1", p.b1.data(), p.b1.size());
  write_tensor(out, "w2", p.w2.data(), p.w2.size());
  write_tensor(out, "b2", p.b2.data(), p.b2.size());
}

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& path)
      : path_(path), in_(path) {
    if (!in_) {
      throw DataError(path.string() + ": cannot open checkpoint");
    }
  }

  std::vector<std::string> next_record(std::string_view expected) {
    std::string line;
    if (!std::getline(in_, line)) {
      fail("truncated checkpoint, expected '" + std::string(expected) + "'");
    }
    ++line_no_;
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string t; fields >> t;) {
      tokens.push_back(std::move(t));
    }
    if (tokens.empty() || tokens[0] != expected) {
      fail("expected '" + std::string(expected) + "' record");
    }
    return tokens;
  }

  Eigen::Index to_dim(const std::string& s) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v <= 0) {
      fail("invalid dimension '" + s + "'");
    }
    return static_cast<Eigen::Index>(v);
  }

  double to_double(const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
      fail("invalid number '" + s + "'");
    }
    return v;
  }

  void read_tensor(std::string_view name, double* data, Eigen::Index n) {
    const auto tokens = next_record(name);
    if (static_cast<Eigen::Index>(tokens.size()) != n + 1) {
      fail("tensor '" + std::string(name) + "' has " +
           std::to_string(tokens.size() - 1) + " values, expected " +
           std::to_string(n));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      data[i] = to_double(tokens[static_cast<std::size_t>(i) + 1]);
    }
  }

  MlpParams read_mlp(std::string_view name) {
    const auto tokens = next_record("mlp");
    if (tokens.size() != 7 || tokens[1] != name) {
      fail("expected 'mlp " + std::string(name) +
           " <in> <hidden> <out> <dropout> <kind>'");
    }
    MlpParams p;
    const auto in = to_dim(tokens[2]);
    const auto hidden = to_dim(tokens[3]);
    const auto out = to_dim(tokens[4]);
    p.dropout_rate = to_double(tokens[5]);
    if (tokens[6] == "vector") {
      p.output_kind = OutputKind::kVector;
    } else if (tokens[6] == "sigmoid") {
      p.output_kind = OutputKind::kScalarSigmoid;
    } else {
      fail("unknown output kind '" + tokens[6] + "'");
    }
    p.w1.resize(hidden, in);
    p.b1.resize(hidden);
    p.w2.resize(out, hidden);
    p.b2.resize(out);
    read_tensor("w1", p.w1.data(), p.w1.size());
    read_tensor("b1", p.b1.data(), p.b1.size());
    read_tensor("w2", p.w2.data(), p.w2.size());
    read_tensor("b2", p.b2.data(), p.b2.size());
    try {
      p.validate();
    } catch (const ConfigError& e) {
      fail(e.what());
    }
    return p;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path_.string() + ":" + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

}  // namespace

void save_checkpoint(const FusionModel& model, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "FSLCKPT 1\n";
  const std::string grammar = model.config.grammar();
  out << "branches " << (grammar.empty() ? "-" : grammar) << '\n';
  out << "branch_losses " << (model.config.branch_losses ? 1 : 0) << '\n';
  write_mlp(out, "visual", model.visual_head);
  for (std::size_t i = 0; i < model.branches.size(); ++i) {
    const auto& b = model.branches[i];
    const std::string suffix = "." + std::to_string(i + 1);
    if (b.semantic) {
      write_mlp(out, "semantic" + suffix, *b.semantic);
    }
    write_mlp(out, "attention" + suffix, b.attention);
  }
  out << "end\n";

  std::ofstream file(path, std::ios::binary);
  if (!file) {
    throw EnvironmentError(path.string() + ": cannot open for writing");
  }
  file << out.str();
  file.flush();
  if (!file) {
    throw EnvironmentError(path.string() + ": write failed");
  }
}

FusionModel load_checkpoint(const std::filesystem::path& path,
                            const BranchConfig* expected) {
  CheckpointReader reader(path);
  const auto header = reader.next_record("FSLCKPT");
  if (header.size() != 2 || header[1] != "1") {
    reader.fail("unsupported checkpoint version");
  }
  const auto branches = reader.next_record("branches");
  const auto losses = reader.next_record("branch_losses");
  if (branches.size() != 2 || losses.size() != 2 ||
      (losses[1] != "0" && losses[1] != "1")) {
    reader.fail("malformed branch configuration");
  }
  FusionModel model;
  try {
    model.config = parse_branch_config(branches[1] == "-" ? "" : branches[1],
                                       losses[1] == "1");
  } catch (const ConfigError& e) {
    reader.fail(e.what());
  }
  if (expected != nullptr && !(*expected == model.config)) {
    throw DataError(path.string() + ": checkpoint was trained with branches '" +
                    model.config.grammar() + "' (branch_losses=" + losses[1] +
                    "), configuration asks for '" + expected->grammar() +
                    "' (branch_losses=" + (expected->branch_losses ? "1" : "0") +
                    ")");
  }
  model.visual_head = reader.read_mlp("visual");
  const auto sources = resolve_attend_sources(model.config);
  for (std::size_t i = 0; i < model.config.branches.size(); ++i) {
    FusionBranch b;
    b.spec = model.config.branches[i];
    b.attend_source = sources[i];
    const std::string suffix = "." + std::to_string(i + 1);
    if (b.spec.input != Modality::kVisual) {
      b.semantic = reader.read_mlp("semantic" + suffix);
    }
    b.attention = reader.read_mlp("attention" + suffix);
    model.branches.push_back(std::move(b));
  }
  reader.next_record("end");
  try {
    model.validate();
  } catch (const ConfigError& e) {
    reader.fail(e.what());
  }
  return model;
}

}  // namespace protofuse
