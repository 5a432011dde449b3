#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "communics/common.hpp"

namespace communics {

inline constexpr int kLibrarySchemaVersion = 1;

enum class Valence { negative, neutral, positive };
enum class TopicTag { social, political };
enum class StatementKind { dialog, narration };
enum class MessageKind { foster_escalation, initiate_deescalation, viewpoint, balance };
enum class AddresseeMode { both, one_participant };

inline constexpr std::size_t kMessageKindCount = 4;

std::string_view to_string(Valence v) noexcept;
std::string_view to_string(TopicTag t) noexcept;
std::string_view to_string(StatementKind k) noexcept;
std::string_view to_string(MessageKind k) noexcept;  // "FOSTER_ESCALATION", ...
std::string_view to_string(AddresseeMode m) noexcept;
MessageKind message_kind_from_string(std::string_view text);

// A bilingual text unit. Sentiments are stored exactly as annotated:
// -1 escalates the conflict, +1 de-escalates it, 0 is neutral.
struct Expression {
    std::string id;
    LocalizedText text;
    int sentiment_a = 0;
    int sentiment_b = 0;
    std::optional<TopicTag> topic;
    std::optional<StatementKind> statement_kind;
};

struct BackgroundAsset {
    std::string id;
    std::string image;
    Valence valence = Valence::neutral;
};

// One drawable variant of a story figure. Several assets may share a figure
// (the same person in different postures).
struct CharacterAsset {
    std::string id;
    std::string figure;
    std::string posture;
    std::string facial_expression;
    std::string image;
};

struct ObjectAsset {
    std::string id;
    std::string image;
};

struct MessageTemplate {
    MessageKind kind = MessageKind::foster_escalation;
    std::string variant_id;
    LocalizedText text;
    AddresseeMode addressee = AddresseeMode::both;
};

struct LanguagePair {
    std::string side_a;
    std::string side_b;

    const std::string& operator[](Side s) const noexcept { return s == Side::a ? side_a : side_b; }
    bool contains(std::string_view lang) const noexcept { return lang == side_a || lang == side_b; }
};

struct LoadOptions {
    // Accept records whose text is missing for one language; each gap becomes a
    // warning instead of a validation error.
    bool allow_missing_translations = false;
    // When set, relative image paths must exist under this directory.
    std::optional<std::filesystem::path> asset_root;
};

// Immutable after construction; safe to share across sessions.
class Library {
public:
    static Library from_json(const nlohmann::json& doc, const LoadOptions& options = {});

    const LanguagePair& languages() const noexcept { return languages_; }
    std::span<const std::string> postures() const noexcept { return postures_; }
    std::span<const std::string> facial_expressions() const noexcept { return facial_expressions_; }

    std::span<const Expression> expressions() const noexcept { return expressions_; }
    std::span<const BackgroundAsset> backgrounds() const noexcept { return backgrounds_; }
    std::span<const CharacterAsset> characters() const noexcept { return characters_; }
    std::span<const ObjectAsset> objects() const noexcept { return objects_; }
    std::span<const MessageTemplate> message_templates() const noexcept { return templates_; }

    // nullptr when absent
    const Expression* find_expression(std::string_view id) const;
    const BackgroundAsset* find_background(std::string_view id) const;
    const CharacterAsset* find_character(std::string_view id) const;
    const ObjectAsset* find_object(std::string_view id) const;
    const MessageTemplate* find_template(std::string_view variant_id) const;

    // Throw Error(unknown_id) when absent.
    const Expression& expression(std::string_view id) const;
    const BackgroundAsset& background(std::string_view id) const;
    const CharacterAsset& character(std::string_view id) const;
    const ObjectAsset& object(std::string_view id) const;

    std::vector<const MessageTemplate*> templates_of(MessageKind kind) const;

    bool has_posture(std::string_view p) const;
    bool has_facial_expression(std::string_view f) const;

    // A session needs at least one background and one expression.
    bool usable_for_sessions() const noexcept { return !expressions_.empty() && !backgrounds_.empty(); }

    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

    // Hex FNV-1a 64 over the canonical serialization.
    const std::string& checksum() const noexcept { return checksum_; }

    nlohmann::json to_json() const;

private:
    Library() = default;
    void build_indexes();

    LanguagePair languages_;
    std::vector<std::string> postures_;
    std::vector<std::string> facial_expressions_;
    std::vector<Expression> expressions_;
    std::vector<BackgroundAsset> backgrounds_;
    std::vector<CharacterAsset> characters_;
    std::vector<ObjectAsset> objects_;
    std::vector<MessageTemplate> templates_;
    std::vector<std::string> warnings_;
    std::string checksum_;

    std::unordered_map<std::string, std::size_t> expression_index_;
    std::unordered_map<std::string, std::size_t> background_index_;
    std::unordered_map<std::string, std::size_t> character_index_;
    std::unordered_map<std::string, std::size_t> object_index_;
    std::unordered_map<std::string, std::size_t> template_index_;
};

Library parse_library(std::string_view text, const LoadOptions& options = {});
Library load_library(const std::filesystem::path& file, const LoadOptions& options = {});
std::string serialize_library(const Library& lib);

struct AlignmentIssue {
    std::string record_id;
    std::string missing_language;

    friend bool operator==(const AlignmentIssue&, const AlignmentIssue&) = default;
};

struct ValidationReport {
    std::vector<AlignmentIssue> issues;

    bool empty() const noexcept { return issues.empty(); }
    std::size_t size() const noexcept { return issues.size(); }
};

// One issue per (record, language) lacking non-empty text, covering both
// expressions and message templates.
ValidationReport validate_alignment(const Library& lib);

// Annotated sentiments, unmodified (library convention).
SidePair<int> intrinsic_values(const Library& lib, std::string_view expr_id);

// Text of an expression or message template in one configured language.
// Never substitutes the other language.
const std::string& localize(const Library& lib, std::string_view id, std::string_view language);

struct LibraryStats {
    std::size_t expressions = 0;
    std::size_t backgrounds = 0;
    std::size_t characters = 0;
    std::size_t objects = 0;
    std::size_t message_templates = 0;
    std::size_t postures = 0;
    // index 0,1,2 -> annotated -1, 0, +1
    SidePair<std::array<std::size_t, 3>> sentiment_histogram{};
};

LibraryStats library_stats(const Library& lib);
nlohmann::json to_json(const LibraryStats& stats);

}  // namespace communics
