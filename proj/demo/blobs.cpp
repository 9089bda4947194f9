// Embeds five Gaussian blobs with the two GDR presets and prints the metrics.
//
//   ./blobs [n] [out_dir]

#include <filesystem>
#include <iostream>
#include <string>

#include <gdr/gdr.hpp>

int main(int argc, char** argv) {
    const std::size_t n = argc > 1 ? std::stoul(argv[1]) : 2000;
    const std::filesystem::path out = argc > 2 ? argv[2] : ".";
    std::filesystem::create_directories(out);

    const auto data = gdr::make_blobs(n, 5, 3, 6.0, 0);
    for (auto preset : {gdr::Preset::gdr_umap, gdr::Preset::gdr_tsne}) {
        auto config = gdr::RunConfig::make(preset);
        const auto result = gdr::run(data, config);
        const auto m = gdr::evaluate(result.state, *data.labels, 0);

        const std::string name(gdr::to_string(preset));
        std::cout << name << ": kNN " << m.knn_accuracy << "  v-measure " << m.v.v << "  spread ratio "
                  << m.spread.ratio << "  (" << result.report.seconds_per_epoch * 1e3 << " ms/epoch)\n";

        gdr::SvgOptions svg;
        svg.title = name;
        gdr::save_svg((out / (name + ".svg")).string(), result.state, &*data.labels, svg);
    }
}
