"""Counter-based random streams and the SVG plot writer."""

import numpy as np

from shadowspec.rng import generator
from shadowspec.plotting import spectrum_svg
from shadowspec.specproc import Spectrum


def test_streams_are_reproducible_and_distinct():
    a = generator(7, "shadows", 3).random(5)
    assert np.array_equal(a, generator(7, "shadows", 3).random(5))
    for other in (generator(8, "shadows", 3), generator(7, "noise", 3), generator(7, "shadows", 4)):
        assert not np.array_equal(a, other.random(5))


def test_stream_independent_of_draw_order():
    first = [generator(1, "noise", n).random() for n in range(5)]
    second = [generator(1, "noise", n).random() for n in reversed(range(5))][::-1]
    assert first == second


def test_svg_contains_curves_and_markers():
    omega = np.linspace(0, 1, 11)
    spec = Spectrum(omega, np.exp(-((omega - 0.4) ** 2) / 0.01), "cross & co")
    svg = spectrum_svg([spec, Spectrum(omega, omega, "mean-squared")], gaps=[0.4, 5.0], title="t<1>")
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert svg.count("<polyline") == 2
    assert svg.count("stroke-dasharray") == 1  # the out-of-range gap is not drawn
    assert "cross &amp; co" in svg and "t&lt;1&gt;" in svg
