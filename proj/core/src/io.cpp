#include "dcpnet/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "dcpnet/augment.hpp"
#include "dcpnet/errors.hpp"

namespace dcpnet {

namespace fs = std::filesystem;

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

int parse_positive(const std::string& tok, const std::string& path, const char* what) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v <= 0) {
    throw IngestionError(path + ": invalid PGM " + what + " '" + tok + "'");
  }
  return v;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

ImageChip read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path);
  const std::string magic = next_token(in);
  if (magic != "P5" && magic != "P2") throw IngestionError(path + ": not a PGM file");
  const int width = parse_positive(next_token(in), path, "width");
  const int height = parse_positive(next_token(in), path, "height");
  const int maxval = parse_positive(next_token(in), path, "maxval");
  if (maxval > 65535) throw IngestionError(path + ": maxval exceeds 65535");

  std::vector<float> px(static_cast<std::size_t>(width) * height);
  if (magic == "P5") {
    const int bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> raw(px.size() * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw IngestionError(path + ": truncated pixel data");
    for (std::size_t i = 0; i < px.size(); ++i) {
      const int v = bytes == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];
      px[i] = std::min(1.0f, static_cast<float>(v) / static_cast<float>(maxval));
    }
  } else {
    for (auto& p : px) {
      const std::string tok = next_token(in);
      if (tok.empty()) throw IngestionError(path + ": truncated pixel data");
      int v = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || v < 0) throw IngestionError(path + ": invalid pixel value '" + tok + "'");
      p = std::min(1.0f, static_cast<float>(v) / static_cast<float>(maxval));
    }
  }
  return ImageChip(height, width, std::move(px));
}

void write_pgm(const std::string& path, const ImageChip& chip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path);
  out << "P5\n" << chip.width() << ' ' << chip.height() << "\n255\n";
  std::vector<unsigned char> raw(chip.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<unsigned char>(std::lround(std::clamp(chip.pixels()[i], 0.0f, 1.0f) * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

ChipCollection ingest_directory(const std::string& directory, int crop_size, std::ostream& warnings) {
  if (crop_size <= 0) throw ConfigError("dataset.crop_size must be positive");
  if (!fs::is_directory(directory)) throw IngestionError("dataset directory does not exist: " + directory);

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm") files.push_back(entry.path().filename().string());
  }
  std::sort(files.begin(), files.end());

  std::map<std::string, std::string> manifest;
  const fs::path manifest_path = fs::path(directory) / "labels.csv";
  const bool labeled = fs::exists(manifest_path);
  if (labeled) {
    std::ifstream in(manifest_path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      line = trim(line);
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw IngestionError("labels.csv line " + std::to_string(line_no) + ": expected filename,label");
      const std::string name = trim(line.substr(0, comma));
      const std::string label = trim(line.substr(comma + 1));
      if (line_no == 1 && name == "filename") continue;
      manifest[name] = label;
    }
  }

  // Integer labels are used as-is; any non-integer label switches to name indexing.
  bool numeric = true;
  std::set<std::string> names;
  for (const auto& [file, label] : manifest) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), v);
    if (ec != std::errc() || ptr != label.data() + label.size() || v < 0) numeric = false;
    names.insert(label);
  }
  std::map<std::string, int> name_index;
  for (const auto& n : names) name_index.emplace(n, static_cast<int>(name_index.size()));

  ChipCollection out;
  for (const auto& file : files) {
    std::string label_text;
    if (labeled) {
      const auto it = manifest.find(file);
      if (it == manifest.end()) {
        warnings << "warning: " << file << " has no entry in labels.csv; skipped\n";
        continue;
      }
      label_text = it->second;
    }
    try {
      ImageChip chip = center_crop_resize(read_pgm((fs::path(directory) / file).string()), crop_size);
      clamp_unit(chip);
      out.chips.push_back(std::move(chip));
      out.names.push_back(file);
      if (labeled) out.labels.push_back(numeric ? std::stoi(label_text) : name_index.at(label_text));
    } catch (const Error& e) {
      warnings << "warning: skipping " << file << ": " << e.what() << '\n';
    }
  }
  if (out.chips.empty()) throw IngestionError("no readable images in " + directory);
  if (labeled) {
    out.num_classes = 1 + *std::max_element(out.labels.begin(), out.labels.end());
  }
  return out;
}

}  // namespace dcpnet
