#ifndef UNFOLD_SVG_HPP_
#define UNFOLD_SVG_HPP_

#include <Eigen/Core>
#include <string>
#include <vector>

namespace unfold {

/// Minimal static SVG line/band plot: axes with ticks, shaded bands,
/// polylines and scatter markers in data coordinates.
class SvgFigure {
  public:
    SvgFigure(std::string title, std::string x_label, std::string y_label);

    void add_band(const Eigen::VectorXd& x, const Eigen::VectorXd& lower,
                  const Eigen::VectorXd& upper, const std::string& color,
                  const std::string& label);
    void add_line(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const std::string& color,
                  const std::string& label, bool dashed = false);
    void add_points(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                    const std::string& color, const std::string& label);
    void add_hline(double y, const std::string& color, const std::string& label);

    void save(const std::string& path) const;

  private:
    struct Band {
        Eigen::VectorXd x, lower, upper;
        std::string color, label;
    };
    struct Line {
        Eigen::VectorXd x, y;
        std::string color, label;
        bool dashed;
    };
    struct Points {
        Eigen::VectorXd x, y;
        std::string color, label;
    };

    std::string title_, x_label_, y_label_;
    std::vector<Band> bands_;
    std::vector<Line> lines_;
    std::vector<Points> points_;
};

}  // namespace unfold

#endif  // UNFOLD_SVG_HPP_
