// Regenerates the frozen prompt files under tests/golden/. Run once after an
// intentional template change and review the diff before committing.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "golden_common.hpp"

int main(int argc, char** argv) {
    std::filesystem::path dir = argc > 1 ? argv[1] : MLZERO_GOLDEN_DIR;
    std::filesystem::create_directories(dir);

    for (const auto& golden_case : golden::build_cases(MLZERO_REGISTRY_FILE)) {
        const auto path = dir / (golden_case.name + ".txt");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            std::cerr << "cannot write " << path << "\n";
            return 1;
        }
        out << golden_case.text;
        std::cout << path.string() << " (" << golden_case.text.size() << " bytes)\n";
    }
    return 0;
}
