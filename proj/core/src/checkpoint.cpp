// Copyright 2026 The EPAN Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>

#include "epan/errors.hpp"
#include "epan/model.hpp"
#include "epan/tensor_io.hpp"

namespace epan {

namespace {

std::string shape_field(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s.empty() ? "scalar" : s;
}

}  // namespace

std::filesystem::path checkpoint_stem(const std::filesystem::path& path) {
  const auto ext = path.extension();
  if (ext == ".index" || ext == ".eptn") {
    auto stem = path;
    stem.replace_extension();
    return stem;
  }
  return path;
}

template <Real T>
void save_checkpoint(const EpanModel<T>& model, const std::filesystem::path& stem_in) {
  const auto stem = checkpoint_stem(stem_in);
  auto data_path = stem;
  data_path += ".eptn";
  auto index_path = stem;
  index_path += ".index";
  std::ofstream data(data_path, std::ios::binary);
  std::ofstream index(index_path);
  if (!data || !index) throw ConfigError("cannot write checkpoint " + stem.string());
  index << "# epan checkpoint v1: name\tshape\toffset\n";
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : model.state()) {
    index << name << '\t' << shape_field(tensor.shape()) << '\t' << offset << '\n';
    write_tensor(data, tensor);
    offset += encoded_size(tensor.shape());
  }
  if (!data || !index) throw FormatError("failed writing checkpoint " + stem.string());
}

template <Real T>
void load_checkpoint(EpanModel<T>& model, const std::filesystem::path& stem_in) {
  const auto stem = checkpoint_stem(stem_in);
  auto data_path = stem;
  data_path += ".eptn";
  auto index_path = stem;
  index_path += ".index";
  std::ifstream index(index_path);
  std::ifstream data(data_path, std::ios::binary);
  if (!index || !data) throw ConfigError("checkpoint not found: " + stem.string());

  std::vector<NamedTensor<double>> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(index, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string name, shape;
    std::uint64_t offset = 0;
    if (!std::getline(fields, name, '\t') || !std::getline(fields, shape, '\t') ||
        !(fields >> offset)) {
      throw FormatError("checkpoint index line " + std::to_string(line_no) + " is malformed");
    }
    data.clear();
    data.seekg(static_cast<std::streamoff>(offset));
    Tensor<double> t = read_tensor<double>(data);
    if (shape_field(t.shape()) != shape) {
      throw FormatError("checkpoint entry " + name + " shape " + shape_field(t.shape()) +
                        " disagrees with index " + shape);
    }
    values.push_back({name, std::move(t)});
  }
  model.set_state_from(values);
}

std::vector<std::pair<std::string, Shape>> checkpoint_shapes(const std::filesystem::path& stem_in) {
  auto index_path = checkpoint_stem(stem_in);
  index_path += ".index";
  std::ifstream index(index_path);
  if (!index) throw ConfigError("checkpoint not found: " + index_path.string());
  std::vector<std::pair<std::string, Shape>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(index, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string name, shape_text;
    if (!std::getline(fields, name, '\t') || !std::getline(fields, shape_text, '\t')) {
      throw FormatError("checkpoint index line " + std::to_string(line_no) + " is malformed");
    }
    Shape shape;
    if (shape_text != "scalar") {
      std::istringstream dims(shape_text);
      std::string d;
      while (std::getline(dims, d, 'x')) {
        try {
          shape.push_back(static_cast<std::size_t>(std::stoull(d)));
        } catch (const std::exception&) {
          throw FormatError("checkpoint index line " + std::to_string(line_no) +
                            " has a bad shape '" + shape_text + "'");
        }
      }
    }
    out.emplace_back(name, std::move(shape));
  }
  return out;
}

template void save_checkpoint(const EpanModel<float>&, const std::filesystem::path&);
template void save_checkpoint(const EpanModel<double>&, const std::filesystem::path&);
template void load_checkpoint(EpanModel<float>&, const std::filesystem::path&);
template void load_checkpoint(EpanModel<double>&, const std::filesystem::path&);

}  // namespace epan
