"""Schema enforcement and deterministic rendering for every figure kind."""

import csv

import pytest

from plotkit import FigureSpec, SchemaError, render
from plotkit.figures import SCHEMAS, read_rows

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


@pytest.fixture
def bounds_csv(tmp_path):
    rows = [[k, 0.1 * k, 2.0, 2.0 - 0.1 * k, 0] for k in range(40)]
    return _write_csv(tmp_path / "bounds.csv", SCHEMAS["bounds"], rows)


@pytest.fixture
def table_csv(tmp_path):
    rows = []
    for config in ("full", "reduced"):
        for kind, base in (("soft", 0.9), ("hard", 0.85)):
            for m in (4, 16):
                rows.append([config, kind, m, 5, 0.99, base + 0.001 * m,
                             base - 0.02, base + 0.05])
    return _write_csv(tmp_path / "table.csv", SCHEMAS["table1"], rows)


class TestSchema:
    def test_missing_column_is_named(self, tmp_path, sweep_csv):
        with open(sweep_csv, newline="") as fh:
            rows = list(csv.reader(fh))
        rows[0][rows[0].index("m_star")] = "width"
        bad = _write_csv(tmp_path / "bad.csv", rows[0], rows[1:])
        with pytest.raises(SchemaError, match="m_star"):
            read_rows(bad, "sweep")

    def test_kind_mismatch_names_absent_columns(self, trace_csv):
        with pytest.raises(SchemaError, match="gamma"):
            read_rows(trace_csv, "sweep")

    def test_file_without_header_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(SchemaError, match="no header"):
            read_rows(path, "trace")

    def test_header_without_rows_rejected(self, tmp_path):
        path = _write_csv(tmp_path / "hollow.csv", SCHEMAS["trace"], [])
        with pytest.raises(SchemaError, match="no data rows"):
            read_rows(path, "trace")

    def test_unknown_kind_rejected(self, trace_csv):
        with pytest.raises(SchemaError, match="unknown figure kind"):
            read_rows(trace_csv, "scatter")

    def test_target_line_restricted_to_trace(self, sweep_csv, tmp_path):
        spec = FigureSpec(csv_path=str(sweep_csv), kind="sweep",
                          out_path=str(tmp_path / "x.png"), target=0.5)
        with pytest.raises(SchemaError, match="trace"):
            render(spec)


class TestRender:
    @pytest.mark.parametrize("kind", sorted(SCHEMAS))
    def test_writes_valid_png(self, kind, trace_csv, sweep_csv, bounds_csv,
                              table_csv, tmp_path):
        src = {"trace": trace_csv, "sweep": sweep_csv, "bounds": bounds_csv,
               "table1": table_csv}[kind]
        out = tmp_path / f"{kind}.png"
        render(FigureSpec(csv_path=str(src), kind=kind, out_path=str(out)))
        data = out.read_bytes()
        assert data.startswith(PNG_MAGIC)
        assert len(data) > 1000

    @pytest.mark.parametrize("kind", sorted(SCHEMAS))
    def test_rendering_is_deterministic(self, kind, trace_csv, sweep_csv,
                                        bounds_csv, table_csv, tmp_path):
        src = {"trace": trace_csv, "sweep": sweep_csv, "bounds": bounds_csv,
               "table1": table_csv}[kind]
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{kind}-{tag}.svg"
            render(FigureSpec(csv_path=str(src), kind=kind,
                              out_path=str(out)))
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_rerender_overwrites_identically(self, sweep_csv, tmp_path):
        out = tmp_path / "sweep.png"
        spec = FigureSpec(csv_path=str(sweep_csv), kind="sweep",
                          out_path=str(out))
        render(spec)
        first = out.read_bytes()
        render(spec)
        assert out.read_bytes() == first

    def test_input_csv_is_not_mutated(self, trace_csv, tmp_path):
        before = trace_csv.read_bytes()
        render(FigureSpec(csv_path=str(trace_csv), kind="trace",
                          out_path=str(tmp_path / "t.png")))
        assert trace_csv.read_bytes() == before

    def test_svg_output_carries_no_timestamp(self, trace_csv, tmp_path):
        out = tmp_path / "t.svg"
        render(FigureSpec(csv_path=str(trace_csv), kind="trace",
                          out_path=str(out)))
        text = out.read_text()
        assert "dc:date" not in text.lower()

    def test_trace_target_line_labeled(self, trace_csv, tmp_path):
        out = tmp_path / "t.svg"
        render(FigureSpec(csv_path=str(trace_csv), kind="trace",
                          out_path=str(out), target=0.5))
        text = out.read_text()
        assert "divergence risk" in text
        assert "target 0.5" in text

    def test_sweep_series_per_label_kind(self, sweep_csv, tmp_path):
        out = tmp_path / "s.svg"
        render(FigureSpec(csv_path=str(sweep_csv), kind="sweep",
                          out_path=str(out)))
        text = out.read_text()
        assert "soft" in text
        assert "hard" in text

    def test_sweep_skips_unreached_cells(self, sweep_csv, tmp_path):
        with open(sweep_csv, newline="") as fh:
            rows = list(csv.reader(fh))
        rows[1][rows[0].index("m_star")] = ""     # grid exhausted marker
        gappy = _write_csv(tmp_path / "gappy.csv", rows[0], rows[1:])
        out = tmp_path / "g.png"
        render(FigureSpec(csv_path=str(gappy), kind="sweep",
                          out_path=str(out)))
        assert out.read_bytes().startswith(PNG_MAGIC)

    def test_title_and_label_overrides_appear(self, table_csv, tmp_path):
        out = tmp_path / "t.svg"
        render(FigureSpec(csv_path=str(table_csv), kind="table1",
                          out_path=str(out), title="digit students",
                          xlabel="width", ylabel="mean accuracy"))
        text = out.read_text()
        assert "digit students" in text
        assert "mean accuracy" in text
