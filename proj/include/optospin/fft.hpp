#pragma once

#include <complex>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace optospin {

// Thin FFTW wrapper. The FFTW planner is not thread-safe, so planning is
// serialized; execution itself is reentrant.
inline std::vector<std::complex<double>> fft_real(const std::vector<double>& in) {
    static std::mutex planner_mutex;
    const std::size_t n = in.size();
    std::vector<std::complex<double>> out(n / 2 + 1);
    std::vector<double> buf(in);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(planner_mutex);
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), buf.data(),
                                    reinterpret_cast<fftw_complex*>(out.data()),
                                    FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(planner_mutex);
        fftw_destroy_plan(plan);
    }
    return out;
}

inline std::vector<std::complex<double>> fft_complex(const std::vector<std::complex<double>>& in) {
    static std::mutex planner_mutex;
    const std::size_t n = in.size();
    std::vector<std::complex<double>> buf(in);
    std::vector<std::complex<double>> out(n);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(planner_mutex);
        plan = fftw_plan_dft_1d(static_cast<int>(n),
                                reinterpret_cast<fftw_complex*>(buf.data()),
                                reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_FORWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(planner_mutex);
        fftw_destroy_plan(plan);
    }
    return out;
}

}  // namespace optospin
