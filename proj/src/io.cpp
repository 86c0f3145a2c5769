#include "spaconet/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace spaconet::io {
namespace {

constexpr char kMagic[4] = {'S', 'P', 'C', '1'};
constexpr std::string_view kManifestHeader = "spaco-manifest v1";
constexpr std::string_view kCheckpointHeader = "spaco-checkpoint v1";

[[noreturn]] void parse_fail(std::size_t offset, const std::string& what) {
  fail(ErrorKind::parse, "byte " + std::to_string(offset) + ": " + what);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint64_t get_le(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int b = 0; b < width; ++b) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + b])) << (8 * b);
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

// Line iteration that remembers each line's byte offset for diagnostics.
struct Line {
  std::string_view text;
  std::size_t offset;
};

std::vector<Line> lines_of(std::string_view text) {
  std::vector<Line> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    out.push_back({text.substr(start, end - start), start});
    start = end + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

// key = value text shared by run configs and generator options.
using Setter = std::function<void(std::string_view value)>;

void apply_key_values(std::string_view text, const std::map<std::string, Setter, std::less<>>& setters) {
  for (const Line& line : lines_of(text)) {
    std::string_view body = line.text;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) parse_fail(line.offset, "expected 'key = value'");
    const std::string_view key = trim(body.substr(0, eq));
    const std::string_view value = trim(body.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) fail(ErrorKind::config, "unknown key '" + std::string(key) + "'");
    it->second(value);
  }
}

template <typename T>
Setter number_setter(const std::string& key, T& target) {
  return [key, &target](std::string_view value) {
    if (!parse_number(value, target)) {
      fail(ErrorKind::config, "key '" + key + "': cannot parse '" + std::string(value) + "'");
    }
  };
}

}  // namespace

const char* to_string(DType d) {
  switch (d) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::u16: return "u16";
  }
  return "unknown";
}

std::size_t element_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u16: return 2;
  }
  fail(ErrorKind::argument, "unknown dtype");
}

std::string encode(const Tensor& t, DType dtype) {
  if (t.rank() > 255) fail(ErrorKind::argument, "tensor rank exceeds 255");
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(dtype));
  out.push_back(static_cast<char>(t.rank()));
  for (auto d : t.shape()) {
    if (d > 0xffffffffull) fail(ErrorKind::argument, "dimension exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + t.size() * element_size(dtype));
  for (double v : t.values()) {
    switch (dtype) {
      case DType::f32: put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); break;
      case DType::f64: put_u64(out, std::bit_cast<std::uint64_t>(v)); break;
      case DType::u16: {
        if (!(v >= 0.0 && v <= 65535.0) || v != std::floor(v)) {
          fail(ErrorKind::argument, "value " + format_double(v) + " is not a 16-bit unsigned label");
        }
        const auto u = static_cast<std::uint16_t>(v);
        out.push_back(static_cast<char>(u & 0xff));
        out.push_back(static_cast<char>(u >> 8));
        break;
      }
    }
  }
  return out;
}

std::string encode(const LabelMap& labels) {
  Tensor t({labels.height, labels.width});
  for (std::size_t i = 0; i < labels.cells.size(); ++i) t[i] = labels.cells[i];
  return encode(t, DType::u16);
}

TensorFile decode(std::string_view bytes, std::size_t& offset) {
  const std::size_t start = offset;
  if (bytes.size() < offset + 6) parse_fail(offset, "truncated tensor header");
  if (std::memcmp(bytes.data() + offset, kMagic, 4) != 0) parse_fail(offset, "bad magic, expected SPC1");
  const auto code = static_cast<unsigned char>(bytes[offset + 4]);
  if (code > 2) parse_fail(offset + 4, "unknown dtype code " + std::to_string(code));
  TensorFile f;
  f.dtype = static_cast<DType>(code);
  const std::size_t ndim = static_cast<unsigned char>(bytes[offset + 5]);
  offset += 6;
  if (bytes.size() < offset + 4 * ndim) parse_fail(offset, "truncated dimension list");
  std::size_t count = 1;
  for (std::size_t d = 0; d < ndim; ++d) {
    f.shape.push_back(get_le(bytes, offset, 4));
    count *= f.shape.back();
    offset += 4;
  }
  const std::size_t esize = element_size(f.dtype);
  if ((bytes.size() - offset) / esize < count) {
    parse_fail(offset, "payload holds " + std::to_string(bytes.size() - offset) + " bytes, header needs " +
                           std::to_string(count * esize) + " (record starts at byte " + std::to_string(start) + ")");
  }
  f.values.resize(count);
  for (std::size_t i = 0; i < count; ++i, offset += esize) {
    switch (f.dtype) {
      case DType::f32: f.values[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, offset, 4))); break;
      case DType::f64: f.values[i] = std::bit_cast<double>(get_le(bytes, offset, 8)); break;
      case DType::u16: f.values[i] = static_cast<double>(get_le(bytes, offset, 2)); break;
    }
  }
  return f;
}

TensorFile decode(std::string_view bytes) {
  std::size_t offset = 0;
  TensorFile f = decode(bytes, offset);
  if (offset != bytes.size()) parse_fail(offset, "trailing bytes after tensor payload");
  return f;
}

LabelMap to_label_map(const TensorFile& file, std::size_t num_classes) {
  if (file.shape.size() != 2) fail(ErrorKind::data, "label map must be rank 2, got " + shape_string(file.shape));
  LabelMap m(file.shape[0], file.shape[1], num_classes);
  for (std::size_t i = 0; i < file.values.size(); ++i) m.cells[i] = static_cast<std::uint16_t>(file.values[i]);
  m.validate();
  return m;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) fail(ErrorKind::io, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::io, "cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_tensor(const fs::path& path, const Tensor& t, DType dtype) { atomic_write(path, encode(t, dtype)); }
void write_labels(const fs::path& path, const LabelMap& labels) { atomic_write(path, encode(labels)); }

TensorFile read_tensor(const fs::path& path) {
  try {
    return decode(read_file(path));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::parse) throw;
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

// ---- manifests -----------------------------------------------------------------

Manifest parse_manifest(std::string_view text, const fs::path& base_dir) {
  const std::vector<Line> lines = lines_of(text);
  if (lines.empty()) parse_fail(0, "empty manifest");
  Manifest m;
  m.base_dir = base_dir;
  {
    const std::string_view header = trim(lines[0].text);
    if (header.substr(0, kManifestHeader.size()) != kManifestHeader) {
      parse_fail(0, "expected header '" + std::string(kManifestHeader) + " classes=<T> objects=<l>'");
    }
    bool have_classes = false, have_objects = false;
    for (std::string_view field : split(trim(header.substr(kManifestHeader.size())), ' ')) {
      if (field.empty()) continue;
      const auto eq = field.find('=');
      const std::size_t at = static_cast<std::size_t>(field.data() - text.data());
      if (eq == std::string_view::npos) parse_fail(at, "malformed header field");
      const std::string_view key = field.substr(0, eq), value = field.substr(eq + 1);
      std::size_t* target = key == "classes" ? &m.classes : key == "objects" ? &m.objects : nullptr;
      if (!target) parse_fail(at, "unknown header field '" + std::string(key) + "'");
      if (!parse_number(value, *target)) parse_fail(at + eq + 1, "expected an integer");
      (key == "classes" ? have_classes : have_objects) = true;
    }
    if (!have_classes || !have_objects) parse_fail(0, "header must give classes= and objects=");
  }
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const Line& line = lines[n];
    std::string_view body = line.text;
    if (!body.empty() && body.back() == '\r') body.remove_suffix(1);
    if (trim(body).empty()) continue;
    const auto fields = split(body, '\t');
    if (fields.size() != 3 && fields.size() != 5) {
      parse_fail(line.offset, "expected 3 or 5 tab-separated fields, found " + std::to_string(fields.size()));
    }
    ManifestEntry e;
    e.image = std::string(fields[0]);
    e.scores = std::string(fields[1]);
    const std::size_t label_at = line.offset + static_cast<std::size_t>(fields[2].data() - body.data());
    if (!parse_number(fields[2], e.label)) parse_fail(label_at, "expected a class index");
    if (e.label >= m.classes) {
      parse_fail(label_at, "class index " + std::to_string(e.label) + " >= classes " + std::to_string(m.classes));
    }
    if (fields.size() == 5) {
      e.image_features = std::string(fields[3]);
      e.spatial_features = std::string(fields[4]);
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

Manifest read_manifest(const fs::path& path) {
  try {
    return parse_manifest(read_file(path), path.parent_path());
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::parse) throw;
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

std::string format_manifest(const Manifest& m) {
  std::string out = std::string(kManifestHeader) + " classes=" + std::to_string(m.classes) +
                    " objects=" + std::to_string(m.objects) + "\n";
  for (const auto& e : m.entries) {
    out += e.image + "\t" + e.scores + "\t" + std::to_string(e.label);
    if (e.image_features && e.spatial_features) out += "\t" + *e.image_features + "\t" + *e.spatial_features;
    out += "\n";
  }
  return out;
}

Dataset load_dataset(const Manifest& m) {
  Dataset d;
  d.classes = m.classes;
  d.objects = m.objects;
  for (const auto& e : m.entries) {
    SampleInput s;
    s.image = read_tensor(resolve(m.base_dir, e.image)).tensor();
    if (s.image.rank() != 3 || s.image.dim(2) != 3) {
      fail(ErrorKind::data, e.image + ": image must be H x W x 3, got " + shape_string(s.image.shape()));
    }
    Tensor scores = read_tensor(resolve(m.base_dir, e.scores)).tensor();
    if (scores.rank() != 3 || scores.dim(2) != m.objects || scores.dim(0) != s.image.dim(0) ||
        scores.dim(1) != s.image.dim(1)) {
      fail(ErrorKind::data, e.scores + ": score tensor " + shape_string(scores.shape()) + " does not match image " +
                                shape_string(s.image.shape()) + " with " + std::to_string(m.objects) + " objects");
    }
    s.scores = ScoreTensor(std::move(scores));
    if (e.image_features) s.image_features = read_tensor(resolve(m.base_dir, *e.image_features)).tensor();
    if (e.spatial_features) s.spatial_features = read_tensor(resolve(m.base_dir, *e.spatial_features)).tensor();
    d.samples.push_back(std::move(s));
    d.labels.push_back(e.label);
  }
  return d;
}

// ---- run configuration -------------------------------------------------------

RunConfig parse_run_config(std::string_view text) {
  RunConfig c;
  std::string variant;
  std::size_t batch_size = 0;
  std::map<std::string, Setter, std::less<>> setters{
      {"seed", number_setter("seed", c.seed)},
      {"objects", number_setter("objects", c.model.objects)},
      {"classes", number_setter("classes", c.model.classes)},
      {"channels", number_setter("channels", c.model.channels)},
      {"heads", number_setter("heads", c.model.heads)},
      {"mlp_ratio", number_setter("mlp_ratio", c.model.mlp_ratio)},
      {"cham_reduction", number_setter("cham_reduction", c.model.cham_reduction)},
      {"acf_kernel", number_setter("acf_kernel", c.model.acf_kernel)},
      {"ifem_factor", number_setter("ifem_factor", c.model.ifem_factor)},
      {"ssrm_factor", number_setter("ssrm_factor", c.model.ssrm_factor)},
      {"variant", [&](std::string_view v) { variant = std::string(v); }},
      {"batch_size", number_setter("batch_size", batch_size)},
  };
  for (StageConfig* s : {&c.stage1, &c.stage2}) {
    const std::string p = "stage" + std::to_string(s->stage) + ".";
    setters.emplace(p + "eta", number_setter(p + "eta", s->eta));
    setters.emplace(p + "dropout", number_setter(p + "dropout", s->dropout));
    setters.emplace(p + "epochs", number_setter(p + "epochs", s->epochs));
    setters.emplace(p + "batch_size", number_setter(p + "batch_size", s->batch_size));
  }
  // batch_size applies to both stages unless a stage sets its own.
  std::map<std::string, bool> seen;
  for (const Line& line : lines_of(text)) {
    const auto eq = line.text.find('=');
    if (eq != std::string_view::npos) seen[std::string(trim(line.text.substr(0, eq)))] = true;
  }
  apply_key_values(text, setters);
  if (batch_size != 0) {
    if (!seen.count("stage1.batch_size")) c.stage1.batch_size = batch_size;
    if (!seen.count("stage2.batch_size")) c.stage2.batch_size = batch_size;
  } else if (seen.count("batch_size")) {
    fail(ErrorKind::config, "key 'batch_size': must be positive");
  }
  if (!variant.empty()) c.model.variant = parse_variant(variant);
  c.stage1.seed = c.seed;
  c.stage2.seed = c.seed;
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorKind::config, std::string("invalid config: ") + e.what());
  }
  return c;
}

RunConfig read_run_config(const fs::path& path) { return parse_run_config(read_file(path)); }

std::string format_run_config(const RunConfig& c) {
  std::ostringstream os;
  const ModelConfig& m = c.model;
  os << "seed = " << c.seed << "\n"
     << "objects = " << m.objects << "\n"
     << "classes = " << m.classes << "\n"
     << "channels = " << m.channels << "\n"
     << "heads = " << m.heads << "\n"
     << "mlp_ratio = " << m.mlp_ratio << "\n"
     << "cham_reduction = " << m.cham_reduction << "\n"
     << "acf_kernel = " << m.acf_kernel << "\n"
     << "ifem_factor = " << m.ifem_factor << "\n"
     << "ssrm_factor = " << m.ssrm_factor << "\n"
     << "variant = " << to_string(m.variant) << "\n";
  for (const StageConfig* s : {&c.stage1, &c.stage2}) {
    const std::string p = "stage" + std::to_string(s->stage) + ".";
    os << p << "eta = " << format_double(s->eta) << "\n"
       << p << "dropout = " << format_double(s->dropout) << "\n"
       << p << "epochs = " << s->epochs << "\n"
       << p << "batch_size = " << s->batch_size << "\n";
  }
  return os.str();
}

std::uint64_t model_config_hash(const ModelConfig& m) {
  RunConfig only_model;
  only_model.model = m;
  only_model.model.variant = Variant::full;  // variant selects a head path, not the parameter set
  const std::string text = format_run_config(only_model);
  // Keep the model lines only (everything before the first stage key).
  return fnv1a(std::string_view(text).substr(0, text.find("stage1.")));
}

GenerateOptions parse_generate_options(std::string_view text) {
  GenerateOptions o;
  std::map<std::string, Setter, std::less<>> setters{
      {"seed", number_setter("seed", o.spec.seed)},
      {"noise", number_setter("noise", o.spec.noise)},
      {"spread", number_setter("spread", o.spec.spread)},
      {"n_train", number_setter("n_train", o.n_train)},
      {"n_test", number_setter("n_test", o.n_test)},
  };
  apply_key_values(text, setters);
  try {
    o.spec.validate();
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
  return o;
}

std::string format_generate_options(const GenerateOptions& o) {
  return "seed = " + std::to_string(o.spec.seed) + "\nnoise = " + format_double(o.spec.noise) +
         "\nspread = " + format_double(o.spec.spread) + "\nn_train = " + std::to_string(o.n_train) +
         "\nn_test = " + std::to_string(o.n_test) + "\n";
}

void write_generated(const fs::path& dir, const GeneratedDataset& data) {
  auto write_split = [&](const std::string& split_name, const std::vector<SampleRecord>& records) {
    Manifest m;
    m.classes = data.spec.classes;
    m.objects = data.spec.objects;
    char stem[32];
    for (std::size_t i = 0; i < records.size(); ++i) {
      std::snprintf(stem, sizeof stem, "%05zu", i);
      const std::string base = split_name + "/" + stem;
      write_tensor(dir / (base + "_image.spc"), records[i].image, DType::f32);
      write_tensor(dir / (base + "_scores.spc"), records[i].scores.data(), DType::f32);
      write_labels(dir / (base + "_labels.spc"), records[i].truth);
      m.entries.push_back({base + "_image.spc", base + "_scores.spc", records[i].label, std::nullopt, std::nullopt});
    }
    atomic_write(dir / (split_name + ".manifest"), format_manifest(m));
  };
  write_split("train", data.train);
  write_split("test", data.test);
}

// ---- checkpoints -------------------------------------------------------------

Checkpoint capture(SpacoNet& model, const RunConfig& config, int stage, std::size_t epoch, const TrainState& state) {
  Checkpoint c;
  c.stage = stage;
  c.epoch = epoch;
  c.seed = config.seed;
  c.config = config;
  c.config.model.variant = model.config().variant;
  c.last_gamma = state.last_gamma;
  c.rng_state = state.rng_state;
  for (const auto& np : model.all_parameters()) {
    c.names.push_back(np.name);
    c.values.push_back(np.param->value);
    c.frozen.push_back(np.param->frozen);
  }
  return c;
}

void restore(SpacoNet& model, const Checkpoint& c) {
  if (model_config_hash(model.config()) != model_config_hash(c.config.model)) {
    fail(ErrorKind::config, "checkpoint was written for a different model configuration");
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < c.names.size(); ++i) index[c.names[i]] = i;
  for (const auto& np : model.all_parameters()) {
    const auto it = index.find(np.name);
    if (it == index.end()) fail(ErrorKind::data, "checkpoint lacks parameter '" + np.name + "'");
    const Tensor& v = c.values[it->second];
    if (v.shape() != np.param->value.shape()) {
      fail(ErrorKind::dimension, "parameter '" + np.name + "' has shape " + shape_string(v.shape()) +
                                     " in the checkpoint, model expects " + shape_string(np.param->value.shape()));
    }
    np.param->value = v;
    np.param->frozen = c.frozen[it->second];
    np.param->zero_grad();
  }
}

std::string encode(const Checkpoint& c) {
  std::ostringstream h;
  h << kCheckpointHeader << "\n"
    << "stage = " << c.stage << "\n"
    << "epoch = " << c.epoch << "\n"
    << "seed = " << c.seed << "\n"
    << "config_hash = " << model_config_hash(c.config.model) << "\n"
    << "last_gamma = " << format_double(c.last_gamma) << "\n"
    << "rng = " << Rng::algorithm << " " << c.rng_state << "\n";
  std::istringstream config_lines(format_run_config(c.config));
  for (std::string line; std::getline(config_lines, line);) h << "config " << line << "\n";
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    h << "param " << c.names[i] << " " << (c.frozen[i] ? "frozen" : "trainable") << "\n";
  }
  h << "end\n";
  std::string out = h.str();
  for (const Tensor& v : c.values) out += encode(v, DType::f64);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Checkpoint c;
  std::size_t offset = 0;
  std::string config_text;
  std::uint64_t hash = 0;
  bool header_seen = false, ended = false;
  while (!ended) {
    const std::size_t eol = bytes.find('\n', offset);
    if (eol == std::string_view::npos) parse_fail(offset, "checkpoint header is not terminated by 'end'");
    const std::string_view line = bytes.substr(offset, eol - offset);
    const std::size_t at = offset;
    offset = eol + 1;
    if (!header_seen) {
      if (line != kCheckpointHeader) parse_fail(at, "expected '" + std::string(kCheckpointHeader) + "'");
      header_seen = true;
      continue;
    }
    if (line == "end") {
      ended = true;
      continue;
    }
    if (line.starts_with("config ")) {
      config_text += std::string(line.substr(7)) + "\n";
      continue;
    }
    if (line.starts_with("param ")) {
      const auto parts = split(line.substr(6), ' ');
      if (parts.size() != 2 || (parts[1] != "frozen" && parts[1] != "trainable")) {
        parse_fail(at, "expected 'param <name> frozen|trainable'");
      }
      c.names.emplace_back(parts[0]);
      c.frozen.push_back(parts[1] == "frozen");
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string_view::npos) parse_fail(at, "malformed header line");
    const std::string_view key = line.substr(0, eq), value = line.substr(eq + 3);
    bool ok = true;
    if (key == "stage") ok = parse_number(value, c.stage);
    else if (key == "epoch") ok = parse_number(value, c.epoch);
    else if (key == "seed") ok = parse_number(value, c.seed);
    else if (key == "config_hash") ok = parse_number(value, hash);
    else if (key == "last_gamma") ok = parse_number(value, c.last_gamma);
    else if (key == "rng") {
      const std::string_view algo = value.substr(0, value.find(' '));
      if (algo != Rng::algorithm) parse_fail(at, "rng algorithm '" + std::string(algo) + "' is not supported");
      c.rng_state = algo.size() < value.size() ? std::string(value.substr(algo.size() + 1)) : std::string();
    } else {
      parse_fail(at, "unknown header key '" + std::string(key) + "'");
    }
    if (!ok) parse_fail(at + eq + 3, "cannot parse value of '" + std::string(key) + "'");
  }
  c.config = parse_run_config(config_text);
  if (model_config_hash(c.config.model) != hash) parse_fail(0, "config_hash does not match the stored config");
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    TensorFile f = decode(bytes, offset);
    if (f.dtype != DType::f64) parse_fail(offset, "checkpoint tensors must be f64");
    c.values.push_back(f.tensor());
  }
  if (offset != bytes.size()) parse_fail(offset, "trailing bytes after the last parameter");
  return c;
}

void write_checkpoint(const fs::path& path, const Checkpoint& c) { atomic_write(path, encode(c)); }

Checkpoint read_checkpoint(const fs::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::parse) throw;
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

}  // namespace spaconet::io
