#include "chatml/class_label.hpp"

namespace chatml {

std::string_view to_string(ClassLabel label) {
    switch (label) {
        case ClassLabel::ProbableAD: return "ProbableAD";
        case ClassLabel::Control: return "Control";
        case ClassLabel::MCI: return "MCI";
        case ClassLabel::PossibleAD: return "PossibleAD";
        case ClassLabel::Vascular: return "Vascular";
        case ClassLabel::Memory: return "Memory";
        case ClassLabel::Other: return "Other";
        case ClassLabel::Dementia: return "Dementia";
        case ClassLabel::Uncategorised: return "Uncategorised";
    }
    return "Uncategorised";
}

std::optional<ClassLabel> parse_class_label(std::string_view text) {
    for (ClassLabel label : kAllClassLabels) {
        if (to_string(label) == text) return label;
    }
    return std::nullopt;
}

std::string_view to_string(Task task) {
    return task == Task::binary ? "binary" : "multiclass";
}

std::optional<Task> parse_task(std::string_view text) {
    if (text == "binary") return Task::binary;
    if (text == "multiclass") return Task::multiclass;
    return std::nullopt;
}

std::vector<ClassLabel> task_labels(Task task) {
    if (task == Task::binary) return {ClassLabel::ProbableAD, ClassLabel::Control};
    return {ClassLabel::ProbableAD, ClassLabel::Control, ClassLabel::MCI,
            ClassLabel::PossibleAD, ClassLabel::Vascular, ClassLabel::Memory};
}

}  // namespace chatml
