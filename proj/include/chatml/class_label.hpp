#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chatml {

/// Diagnostic groups of the Pitt corpus, in the corpus' frequency order.
enum class ClassLabel {
    ProbableAD,
    Control,
    MCI,
    PossibleAD,
    Vascular,
    Memory,
    Other,
    Dementia,
    Uncategorised,
};

inline constexpr std::array<ClassLabel, 9> kAllClassLabels = {
    ClassLabel::ProbableAD, ClassLabel::Control, ClassLabel::MCI,
    ClassLabel::PossibleAD, ClassLabel::Vascular, ClassLabel::Memory,
    ClassLabel::Other,      ClassLabel::Dementia, ClassLabel::Uncategorised,
};

enum class Task { binary, multiclass };

std::string_view to_string(ClassLabel label);
std::optional<ClassLabel> parse_class_label(std::string_view text);

std::string_view to_string(Task task);
std::optional<Task> parse_task(std::string_view text);

/// Labels kept for a task, in canonical order. This order is also the
/// class order models are trained with.
std::vector<ClassLabel> task_labels(Task task);

}  // namespace chatml
