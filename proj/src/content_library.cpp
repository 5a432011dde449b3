#include "communics/content_library.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace communics {

using nlohmann::json;

std::string_view to_string(Valence v) noexcept {
    switch (v) {
        case Valence::negative: return "negative";
        case Valence::neutral: return "neutral";
        case Valence::positive: return "positive";
    }
    return "neutral";
}

std::string_view to_string(TopicTag t) noexcept { return t == TopicTag::social ? "social" : "political"; }

std::string_view to_string(StatementKind k) noexcept { return k == StatementKind::dialog ? "dialog" : "narration"; }

std::string_view to_string(MessageKind k) noexcept {
    switch (k) {
        case MessageKind::foster_escalation: return "FOSTER_ESCALATION";
        case MessageKind::initiate_deescalation: return "INITIATE_DEESCALATION";
        case MessageKind::viewpoint: return "VIEWPOINT";
        case MessageKind::balance: return "BALANCE";
    }
    return "FOSTER_ESCALATION";
}

std::string_view to_string(AddresseeMode m) noexcept { return m == AddresseeMode::both ? "both" : "one_participant"; }

MessageKind message_kind_from_string(std::string_view text) {
    for (auto k : {MessageKind::foster_escalation, MessageKind::initiate_deescalation, MessageKind::viewpoint,
                   MessageKind::balance}) {
        if (to_string(k) == text) return k;
    }
    throw Error(ErrorCode::parse_error, "unknown message kind '" + std::string(text) + "'");
}

namespace {

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::validation_error, path + ": " + what);
}

std::string record_path(std::string_view array, std::size_t index, const json& rec) {
    std::string path = std::string(array) + "[" + std::to_string(index) + "]";
    if (rec.is_object() && rec.contains("id") && rec["id"].is_string()) {
        path += " (" + rec["id"].get<std::string>() + ")";
    } else if (rec.is_object() && rec.contains("variant_id") && rec["variant_id"].is_string()) {
        path += " (" + rec["variant_id"].get<std::string>() + ")";
    }
    return path;
}

std::string required_string(const json& rec, const char* key, const std::string& path) {
    if (!rec.contains(key) || !rec[key].is_string()) invalid(path, std::string("missing string field '") + key + "'");
    auto value = rec[key].get<std::string>();
    if (value.empty()) invalid(path, std::string("field '") + key + "' is empty");
    return value;
}

const json& array_field(const json& doc, const char* key) {
    static const json empty = json::array();
    if (!doc.contains(key)) return empty;
    if (!doc[key].is_array()) invalid(key, "must be an array");
    return doc[key];
}

template <typename Enum, std::size_t N>
Enum parse_enum(const json& value, const std::array<Enum, N>& options, const std::string& path, const char* field) {
    if (value.is_string()) {
        for (auto option : options) {
            if (to_string(option) == value.get<std::string>()) return option;
        }
    }
    invalid(path, std::string("invalid value for '") + field + "': " + value.dump());
}

int parse_sentiment(const json& sentiment, const char* side, const std::string& path) {
    if (!sentiment.contains(side) || !sentiment[side].is_number_integer()) {
        invalid(path, std::string("sentiment.") + side + " must be an integer");
    }
    auto value = sentiment[side].get<long long>();
    if (value < -1 || value > 1) {
        invalid(path, std::string("sentiment.") + side + " must be -1, 0 or +1, got " + std::to_string(value));
    }
    return static_cast<int>(value);
}

LocalizedText parse_text(const json& rec, const LanguagePair& langs, const std::string& path, const LoadOptions& options,
                         std::vector<std::string>& warnings) {
    if (!rec.contains("text") || !rec["text"].is_object()) invalid(path, "missing object field 'text'");
    LocalizedText text;
    for (const auto& [lang, value] : rec["text"].items()) {
        if (!langs.contains(lang)) invalid(path, "text for unconfigured language '" + lang + "'");
        if (!value.is_string()) invalid(path, "text." + lang + " must be a string");
        if (!value.get<std::string>().empty()) text[lang] = value.get<std::string>();
    }
    for (const auto& lang : {langs.side_a, langs.side_b}) {
        if (text.count(lang)) continue;
        if (!options.allow_missing_translations) invalid(path, "missing text for language '" + lang + "'");
        warnings.push_back(path + ": missing text for language '" + lang + "'");
    }
    return text;
}

void check_image(const std::string& image, const std::string& path, const LoadOptions& options) {
    if (!options.asset_root || image.find("://") != std::string::npos) return;
    std::filesystem::path p(image);
    if (p.is_relative()) p = *options.asset_root / p;
    if (!std::filesystem::exists(p)) invalid(path, "image '" + image + "' not found");
}

std::vector<std::string> string_set(const json& doc, const char* key) {
    std::vector<std::string> out;
    for (const auto& v : array_field(doc, key)) {
        if (!v.is_string() || v.get<std::string>().empty()) invalid(key, "entries must be non-empty strings");
        out.push_back(v.get<std::string>());
    }
    std::set<std::string> unique(out.begin(), out.end());
    if (unique.size() != out.size()) invalid(key, "duplicate entries");
    return out;
}

json text_to_json(const LocalizedText& text) {
    json out = json::object();
    for (const auto& [lang, value] : text) out[lang] = value;
    return out;
}

std::string fnv1a_hex(std::string_view data) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

template <typename T>
const T* lookup(const std::unordered_map<std::string, std::size_t>& index, const std::vector<T>& items,
                std::string_view id) {
    auto it = index.find(std::string(id));
    return it == index.end() ? nullptr : &items[it->second];
}

template <typename T>
const T& require(const T* found, std::string_view what, std::string_view id) {
    if (!found) throw Error(ErrorCode::unknown_id, "unknown " + std::string(what) + " id '" + std::string(id) + "'");
    return *found;
}

}  // namespace

Library Library::from_json(const json& doc, const LoadOptions& options) {
    if (!doc.is_object()) invalid("$", "library document must be a JSON object");
    if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer()) {
        invalid("schema_version", "required integer field");
    }
    if (doc["schema_version"].get<int>() != kLibrarySchemaVersion) {
        invalid("schema_version", "unsupported version " + doc["schema_version"].dump());
    }

    Library lib;
    if (!doc.contains("languages") || !doc["languages"].is_object()) invalid("languages", "required object field");
    lib.languages_.side_a = required_string(doc["languages"], "side_a", "languages");
    lib.languages_.side_b = required_string(doc["languages"], "side_b", "languages");
    if (lib.languages_.side_a == lib.languages_.side_b) invalid("languages", "sides must use distinct languages");

    lib.postures_ = string_set(doc, "postures");
    lib.facial_expressions_ = string_set(doc, "facial_expressions");

    std::set<std::string> ids;
    auto claim_id = [&ids](const std::string& id, const std::string& path) {
        if (!ids.insert(id).second) invalid(path, "duplicate id '" + id + "'");
    };

    const auto& backgrounds = array_field(doc, "backgrounds");
    for (std::size_t i = 0; i < backgrounds.size(); ++i) {
        const auto& rec = backgrounds[i];
        auto path = record_path("backgrounds", i, rec);
        if (!rec.is_object()) invalid(path, "must be an object");
        BackgroundAsset bg;
        bg.id = required_string(rec, "id", path);
        claim_id(bg.id, path);
        bg.image = required_string(rec, "image", path);
        check_image(bg.image, path, options);
        bg.valence = parse_enum(rec.value("valence", json()),
                                std::array{Valence::negative, Valence::neutral, Valence::positive}, path, "valence");
        lib.backgrounds_.push_back(std::move(bg));
    }

    const auto& characters = array_field(doc, "characters");
    for (std::size_t i = 0; i < characters.size(); ++i) {
        const auto& rec = characters[i];
        auto path = record_path("characters", i, rec);
        if (!rec.is_object()) invalid(path, "must be an object");
        CharacterAsset ch;
        ch.id = required_string(rec, "id", path);
        claim_id(ch.id, path);
        ch.figure = rec.contains("figure") ? required_string(rec, "figure", path) : ch.id;
        ch.posture = required_string(rec, "posture", path);
        if (!lib.has_posture(ch.posture)) invalid(path, "posture '" + ch.posture + "' not in declared postures");
        ch.facial_expression = required_string(rec, "facial_expression", path);
        if (!lib.has_facial_expression(ch.facial_expression)) {
            invalid(path, "facial expression '" + ch.facial_expression + "' not in declared facial_expressions");
        }
        ch.image = required_string(rec, "image", path);
        check_image(ch.image, path, options);
        lib.characters_.push_back(std::move(ch));
    }

    const auto& objects = array_field(doc, "objects");
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const auto& rec = objects[i];
        auto path = record_path("objects", i, rec);
        if (!rec.is_object()) invalid(path, "must be an object");
        ObjectAsset obj;
        obj.id = required_string(rec, "id", path);
        claim_id(obj.id, path);
        obj.image = required_string(rec, "image", path);
        check_image(obj.image, path, options);
        lib.objects_.push_back(std::move(obj));
    }

    const auto& expressions = array_field(doc, "expressions");
    for (std::size_t i = 0; i < expressions.size(); ++i) {
        const auto& rec = expressions[i];
        auto path = record_path("expressions", i, rec);
        if (!rec.is_object()) invalid(path, "must be an object");
        Expression ex;
        ex.id = required_string(rec, "id", path);
        claim_id(ex.id, path);
        ex.text = parse_text(rec, lib.languages_, path, options, lib.warnings_);
        if (!rec.contains("sentiment") || !rec["sentiment"].is_object()) invalid(path, "missing object field 'sentiment'");
        ex.sentiment_a = parse_sentiment(rec["sentiment"], "side_a", path);
        ex.sentiment_b = parse_sentiment(rec["sentiment"], "side_b", path);
        if (rec.contains("topic") && !rec["topic"].is_null()) {
            ex.topic = parse_enum(rec["topic"], std::array{TopicTag::social, TopicTag::political}, path, "topic");
        }
        if (rec.contains("statement_kind") && !rec["statement_kind"].is_null()) {
            ex.statement_kind = parse_enum(rec["statement_kind"],
                                           std::array{StatementKind::dialog, StatementKind::narration}, path,
                                           "statement_kind");
        }
        lib.expressions_.push_back(std::move(ex));
    }

    const auto& messages = array_field(doc, "mediator_messages");
    for (std::size_t i = 0; i < messages.size(); ++i) {
        const auto& rec = messages[i];
        auto path = record_path("mediator_messages", i, rec);
        if (!rec.is_object()) invalid(path, "must be an object");
        MessageTemplate t;
        t.kind = parse_enum(rec.value("kind", json()),
                            std::array{MessageKind::foster_escalation, MessageKind::initiate_deescalation,
                                       MessageKind::viewpoint, MessageKind::balance},
                            path, "kind");
        t.variant_id = required_string(rec, "variant_id", path);
        claim_id(t.variant_id, path);
        t.addressee = parse_enum(rec.value("addressee", json("both")),
                                 std::array{AddresseeMode::both, AddresseeMode::one_participant}, path, "addressee");
        t.text = parse_text(rec, lib.languages_, path, options, lib.warnings_);
        lib.templates_.push_back(std::move(t));
    }

    // A library that can drive sessions must be able to voice every rule.
    if (!lib.expressions_.empty()) {
        for (auto kind : {MessageKind::foster_escalation, MessageKind::initiate_deescalation, MessageKind::viewpoint,
                          MessageKind::balance}) {
            bool found = std::any_of(lib.templates_.begin(), lib.templates_.end(),
                                     [kind](const MessageTemplate& t) { return t.kind == kind; });
            if (!found) invalid("mediator_messages", "no variant for kind " + std::string(to_string(kind)));
        }
    }

    lib.build_indexes();
    lib.checksum_ = fnv1a_hex(lib.to_json().dump());
    return lib;
}

void Library::build_indexes() {
    for (std::size_t i = 0; i < expressions_.size(); ++i) expression_index_.emplace(expressions_[i].id, i);
    for (std::size_t i = 0; i < backgrounds_.size(); ++i) background_index_.emplace(backgrounds_[i].id, i);
    for (std::size_t i = 0; i < characters_.size(); ++i) character_index_.emplace(characters_[i].id, i);
    for (std::size_t i = 0; i < objects_.size(); ++i) object_index_.emplace(objects_[i].id, i);
    for (std::size_t i = 0; i < templates_.size(); ++i) template_index_.emplace(templates_[i].variant_id, i);
}

const Expression* Library::find_expression(std::string_view id) const {
    return lookup(expression_index_, expressions_, id);
}
const BackgroundAsset* Library::find_background(std::string_view id) const {
    return lookup(background_index_, backgrounds_, id);
}
const CharacterAsset* Library::find_character(std::string_view id) const {
    return lookup(character_index_, characters_, id);
}
const ObjectAsset* Library::find_object(std::string_view id) const { return lookup(object_index_, objects_, id); }
const MessageTemplate* Library::find_template(std::string_view variant_id) const {
    return lookup(template_index_, templates_, variant_id);
}

const Expression& Library::expression(std::string_view id) const {
    return require(find_expression(id), "expression", id);
}
const BackgroundAsset& Library::background(std::string_view id) const {
    return require(find_background(id), "background", id);
}
const CharacterAsset& Library::character(std::string_view id) const {
    return require(find_character(id), "character", id);
}
const ObjectAsset& Library::object(std::string_view id) const { return require(find_object(id), "object", id); }

std::vector<const MessageTemplate*> Library::templates_of(MessageKind kind) const {
    std::vector<const MessageTemplate*> out;
    for (const auto& t : templates_) {
        if (t.kind == kind) out.push_back(&t);
    }
    return out;
}

bool Library::has_posture(std::string_view p) const {
    return std::find(postures_.begin(), postures_.end(), p) != postures_.end();
}

bool Library::has_facial_expression(std::string_view f) const {
    return std::find(facial_expressions_.begin(), facial_expressions_.end(), f) != facial_expressions_.end();
}

json Library::to_json() const {
    json doc;
    doc["schema_version"] = kLibrarySchemaVersion;
    doc["languages"] = {{"side_a", languages_.side_a}, {"side_b", languages_.side_b}};
    doc["postures"] = postures_;
    doc["facial_expressions"] = facial_expressions_;

    doc["backgrounds"] = json::array();
    for (const auto& bg : backgrounds_) {
        doc["backgrounds"].push_back({{"id", bg.id}, {"image", bg.image}, {"valence", to_string(bg.valence)}});
    }
    doc["characters"] = json::array();
    for (const auto& ch : characters_) {
        doc["characters"].push_back({{"id", ch.id},
                                     {"figure", ch.figure},
                                     {"posture", ch.posture},
                                     {"facial_expression", ch.facial_expression},
                                     {"image", ch.image}});
    }
    doc["objects"] = json::array();
    for (const auto& obj : objects_) doc["objects"].push_back({{"id", obj.id}, {"image", obj.image}});

    doc["expressions"] = json::array();
    for (const auto& ex : expressions_) {
        json rec = {{"id", ex.id},
                    {"text", text_to_json(ex.text)},
                    {"sentiment", {{"side_a", ex.sentiment_a}, {"side_b", ex.sentiment_b}}}};
        if (ex.topic) rec["topic"] = to_string(*ex.topic);
        if (ex.statement_kind) rec["statement_kind"] = to_string(*ex.statement_kind);
        doc["expressions"].push_back(std::move(rec));
    }
    doc["mediator_messages"] = json::array();
    for (const auto& t : templates_) {
        doc["mediator_messages"].push_back({{"kind", to_string(t.kind)},
                                            {"variant_id", t.variant_id},
                                            {"addressee", to_string(t.addressee)},
                                            {"text", text_to_json(t.text)}});
    }
    return doc;
}

Library parse_library(std::string_view text, const LoadOptions& options) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::parse_error, std::string("library is not valid JSON: ") + e.what());
    }
    return Library::from_json(doc, options);
}

Library load_library(const std::filesystem::path& file, const LoadOptions& options) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot open library file " + file.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_library(buf.str(), options);
}

std::string serialize_library(const Library& lib) { return lib.to_json().dump(2); }

ValidationReport validate_alignment(const Library& lib) {
    ValidationReport report;
    const auto& langs = lib.languages();
    auto scan = [&](const std::string& id, const LocalizedText& text) {
        for (const auto& lang : {langs.side_a, langs.side_b}) {
            auto it = text.find(lang);
            if (it == text.end() || it->second.empty()) report.issues.push_back({id, lang});
        }
    };
    for (const auto& ex : lib.expressions()) scan(ex.id, ex.text);
    for (const auto& t : lib.message_templates()) scan(t.variant_id, t.text);
    return report;
}

SidePair<int> intrinsic_values(const Library& lib, std::string_view expr_id) {
    const auto& ex = lib.expression(expr_id);
    return {ex.sentiment_a, ex.sentiment_b};
}

const std::string& localize(const Library& lib, std::string_view id, std::string_view language) {
    const LocalizedText* text = nullptr;
    if (const auto* ex = lib.find_expression(id)) {
        text = &ex->text;
    } else if (const auto* t = lib.find_template(id)) {
        text = &t->text;
    } else {
        throw Error(ErrorCode::unknown_id, "unknown text id '" + std::string(id) + "'");
    }
    if (!lib.languages().contains(language)) {
        throw Error(ErrorCode::unsupported_language, "language '" + std::string(language) + "' is not configured");
    }
    auto it = text->find(std::string(language));
    if (it == text->end()) {
        throw Error(ErrorCode::missing_translation,
                    "'" + std::string(id) + "' has no text for language '" + std::string(language) + "'");
    }
    return it->second;
}

LibraryStats library_stats(const Library& lib) {
    LibraryStats s;
    s.expressions = lib.expressions().size();
    s.backgrounds = lib.backgrounds().size();
    s.characters = lib.characters().size();
    s.objects = lib.objects().size();
    s.message_templates = lib.message_templates().size();
    s.postures = lib.postures().size();
    for (const auto& ex : lib.expressions()) {
        ++s.sentiment_histogram.a[static_cast<std::size_t>(ex.sentiment_a + 1)];
        ++s.sentiment_histogram.b[static_cast<std::size_t>(ex.sentiment_b + 1)];
    }
    return s;
}

json to_json(const LibraryStats& s) {
    auto hist = [](const std::array<std::size_t, 3>& h) { return json{{"-1", h[0]}, {"0", h[1]}, {"+1", h[2]}}; };
    return {{"expressions", s.expressions},
            {"backgrounds", s.backgrounds},
            {"characters", s.characters},
            {"objects", s.objects},
            {"message_templates", s.message_templates},
            {"postures", s.postures},
            {"sentiment_histogram", {{"side_a", hist(s.sentiment_histogram.a)}, {"side_b", hist(s.sentiment_histogram.b)}}}};
}

}  // namespace communics
