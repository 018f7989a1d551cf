#include "stlab/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stlab/corpus.hpp"
#include "stlab/error.hpp"

namespace stlab {

using nlohmann::json;

namespace {

json config_json(const ModelConfig& c) {
  const double scale = c.init_scale;
  return json{{"hidden", c.hidden},
              {"asr_layers", c.asr_layers},
              {"mt_encoder_layers", c.mt_encoder_layers},
              {"mt_encoder", to_string(c.mt_encoder)},
              {"adapter_layers", c.adapter_layers},
              {"tie_output", c.tie_output},
              {"init_scale", encode_hex_doubles(std::span<const double>(&scale, 1))}};
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  c.hidden = j.at("hidden").get<std::size_t>();
  c.asr_layers = j.at("asr_layers").get<std::size_t>();
  c.mt_encoder_layers = j.at("mt_encoder_layers").get<std::size_t>();
  c.mt_encoder = encoder_kind_from_string(j.at("mt_encoder").get<std::string>());
  c.adapter_layers = j.at("adapter_layers").get<std::size_t>();
  c.tie_output = j.at("tie_output").get<bool>();
  c.init_scale = decode_hex_doubles(j.at("init_scale").get<std::string>()).at(0);
  return c;
}

json flags_json(const PipelineFlags& f) {
  return json{{"use_compression", f.use_compression},
              {"use_adapter", f.use_adapter},
              {"use_target_forcing", f.use_target_forcing},
              {"drop_blank_segments", f.drop_blank_segments},
              {"decoder_starts_with_tag", f.decoder_starts_with_tag},
              {"pool_excludes_tag", f.pool_excludes_tag},
              {"text_path_source", f.text_path_source},
              {"encoder_language_tag", f.encoder_language_tag}};
}

PipelineFlags flags_from(const json& j) {
  PipelineFlags f;
  f.use_compression = j.at("use_compression").get<bool>();
  f.use_adapter = j.at("use_adapter").get<bool>();
  f.use_target_forcing = j.at("use_target_forcing").get<bool>();
  f.drop_blank_segments = j.at("drop_blank_segments").get<bool>();
  f.decoder_starts_with_tag = j.at("decoder_starts_with_tag").get<bool>();
  f.pool_excludes_tag = j.at("pool_excludes_tag").get<bool>();
  f.text_path_source = j.at("text_path_source").get<bool>();
  f.encoder_language_tag = j.at("encoder_language_tag").get<bool>();
  return f;
}

}  // namespace

std::string checkpoint_to_string(const SpeechTranslationModel& model) {
  SpeechTranslationModel m = model;  // groups() hands out mutable views
  std::vector<std::string> source, target;
  for (std::size_t i = TokenVocab::kReserved; i < model.tokens.size(); ++i) {
    (model.tokens.kind(i) == TokenKind::kSource ? source : target).push_back(model.tokens.symbol(i));
  }
  json params = json::array();
  for (auto& g : m.groups()) {
    for (const Parameter* p : g.params()) {
      params.push_back(json{{"group", g.name()},
                            {"name", p->name},
                            {"shape", {p->value.rows(), p->value.cols()}},
                            {"data", encode_hex_doubles(p->value.values())}});
    }
  }
  json doc{{"format", "stlab-checkpoint"},
           {"version", kCheckpointVersion},
           {"config", config_json(model.config)},
           {"flags", flags_json(model.flags)},
           {"feature_dim", model.asr.feature_dim},
           {"alphabet", model.chars.alphabet()},
           {"source_words", source},
           {"target_words", target},
           {"parameters", params}};
  return doc.dump(1) + "\n";
}

SpeechTranslationModel checkpoint_from_string(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "stlab-checkpoint") throw IoError("not a checkpoint");
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw IoError("checkpoint version " + std::to_string(version) + " does not match supported version " +
                    std::to_string(kCheckpointVersion));
    }
    SpeechTranslationModel m = SpeechTranslationModel::create(
        config_from(doc.at("config")), flags_from(doc.at("flags")), doc.at("feature_dim").get<std::size_t>(),
        CharVocab(doc.at("alphabet").get<std::string>()),
        TokenVocab(doc.at("source_words").get<std::vector<std::string>>(),
                   doc.at("target_words").get<std::vector<std::string>>()),
        0);
    std::map<std::string, Parameter*> by_name;
    for (auto& g : m.groups()) {
      for (Parameter* p : g.params()) by_name[p->name] = p;
    }
    const json& params = doc.at("parameters");
    if (params.size() != by_name.size()) {
      throw IoError("checkpoint holds " + std::to_string(params.size()) + " parameters, model has " +
                    std::to_string(by_name.size()));
    }
    for (const json& p : params) {
      const std::string name = p.at("name").get<std::string>();
      const auto it = by_name.find(name);
      if (it == by_name.end()) throw IoError("unexpected parameter '" + name + "'");
      Parameter& dst = *it->second;
      const std::size_t rows = p.at("shape").at(0).get<std::size_t>();
      const std::size_t cols = p.at("shape").at(1).get<std::size_t>();
      if (rows != dst.value.rows() || cols != dst.value.cols()) {
        throw IoError("parameter '" + name + "' has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                      ", expected " + shape_string(dst.value.shape()));
      }
      dst.value = Tensor({rows, cols}, decode_hex_doubles(p.at("data").get<std::string>()));
      dst.zero_grad();
      by_name.erase(it);
    }
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw IoError(std::string("invalid checkpoint: ") + e.what());
  }
}

void save_checkpoint(const SpeechTranslationModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << checkpoint_to_string(model);
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

SpeechTranslationModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace stlab
