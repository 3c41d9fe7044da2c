#include "seqxfer/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "seqxfer/errors.hpp"

namespace seqxfer {

namespace {

constexpr const char* kMagic = "seqxfer-checkpoint 1";

void check_line(const std::string& text, const std::string& what) {
  if (text.find('\n') != std::string::npos || text.find('\r') != std::string::npos) {
    throw ContractError(what + " must not contain line breaks");
  }
}

void write_section(std::ostream& out, const std::string& name, const std::vector<std::string>& lines) {
  out << '[' << name << "] " << lines.size() << '\n';
  for (const auto& l : lines) {
    check_line(l, name + " entry");
    out << l << '\n';
  }
}

class ManifestReader {
 public:
  explicit ManifestReader(std::istream& in) : in_(in) {}

  std::string next() {
    std::string line;
    if (!std::getline(in_, line)) fail("unexpected end of manifest");
    ++lineno_;
    return line;
  }

  std::vector<std::string> section(const std::string& name) {
    const std::string header = next();
    const std::string prefix = "[" + name + "] ";
    if (header.rfind(prefix, 0) != 0) fail("expected section [" + name + "]");
    const auto count = parse_count(header.substr(prefix.size()));
    std::vector<std::string> lines;
    lines.reserve(count);
    for (std::size_t i = 0; i < count; ++i) lines.push_back(next());
    return lines;
  }

  std::size_t parse_count(const std::string& text) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) fail("bad count '" + text + "'");
    return v;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("checkpoint manifest line " + std::to_string(lineno_) + ": " + what);
  }

 private:
  std::istream& in_;
  std::size_t lineno_ = 0;
};

}  // namespace

const std::string& Checkpoint::arch(const std::string& key) const {
  auto it = architecture.find(key);
  if (it == architecture.end()) throw DataError("checkpoint architecture lacks '" + key + "'");
  return it->second;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw DataError("malformed number '" + text + "'");
  return v;
}

std::string join(const std::vector<std::size_t>& values, char sep) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(values[i]);
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text, char sep) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw DataError("malformed size list '" + text + "'");
    }
    out.push_back(v);
  }
  return out;
}

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out << kMagic << '\n';
  std::vector<std::string> arch;
  for (const auto& [k, v] : ckpt.architecture) {
    if (k.empty() || k.find('=') != std::string::npos) throw ContractError("bad architecture key '" + k + "'");
    arch.push_back(k + "=" + v);
  }
  write_section(out, "architecture", arch);
  write_section(out, "provenance", ckpt.provenance);
  write_section(out, "metrics", ckpt.metrics);
  const auto w = ckpt.words.entries();
  write_section(out, "words", {w.begin(), w.end()});
  const auto c = ckpt.chars.entries();
  write_section(out, "chars", {c.begin(), c.end()});
  std::vector<std::string> tensors;
  for (const auto& [name, t] : ckpt.params) {
    if (name.find(' ') != std::string::npos) throw ContractError("tensor name '" + name + "' contains a space");
    std::string line = name + " " + std::to_string(t.rank());
    for (auto d : t.shape()) line += " " + std::to_string(d);
    tensors.push_back(std::move(line));
  }
  write_section(out, "tensors", tensors);
  out << "[payload]\n";

  std::vector<char> bytes;
  for (const auto& [_, t] : ckpt.params) {
    bytes.resize(t.size() * 8);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto bits = std::bit_cast<std::uint64_t>(t[i]);
      for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw DataError("failed writing checkpoint");
}

Checkpoint load_checkpoint(std::istream& in) {
  ManifestReader reader(in);
  if (reader.next() != kMagic) reader.fail("not a seqxfer checkpoint (bad magic line)");
  Checkpoint ckpt;
  for (const auto& line : reader.section("architecture")) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) reader.fail("architecture entry without key=value: " + line);
    ckpt.architecture[line.substr(0, eq)] = line.substr(eq + 1);
  }
  ckpt.provenance = reader.section("provenance");
  ckpt.metrics = reader.section("metrics");
  ckpt.words = Vocabulary(Vocabulary::Kind::kWord, reader.section("words"));
  ckpt.chars = Vocabulary(Vocabulary::Kind::kChar, reader.section("chars"));

  std::vector<std::pair<std::string, Shape>> declared;
  for (const auto& line : reader.section("tensors")) {
    std::istringstream ss(line);
    std::string name;
    std::size_t rank = 0;
    if (!(ss >> name >> rank) || rank == 0) reader.fail("bad tensor declaration: " + line);
    Shape shape(rank);
    for (auto& d : shape) {
      if (!(ss >> d) || d == 0) reader.fail("bad shape in tensor declaration: " + line);
    }
    std::string extra;
    if (ss >> extra) reader.fail("trailing fields in tensor declaration: " + line);
    declared.emplace_back(std::move(name), std::move(shape));
  }
  if (reader.next() != "[payload]") reader.fail("expected [payload]");

  std::vector<char> bytes;
  for (auto& [name, shape] : declared) {
    const std::size_t n = shape_size(shape);
    bytes.resize(n * 8);
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
      throw DataError("checkpoint payload truncated in tensor " + name + " " + shape_string(shape));
    }
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
      data[i] = std::bit_cast<double>(bits);
    }
    Tensor t(shape, std::move(data));
    if (!t.all_finite()) throw DataError("checkpoint tensor " + name + " contains non-finite values");
    if (!ckpt.params.emplace(name, std::move(t)).second) throw DataError("duplicate tensor " + name);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after checkpoint payload");
  return ckpt;
}

void save_checkpoint_file(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  save_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  try {
    return load_checkpoint(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace seqxfer
