import contextlib
import io
import tempfile
import unittest
from pathlib import Path

from manage import main
from mixed.services.summary import format_fit
from simulation.models import CSV_COLUMNS, SimParams
from simulation.services.generators import generate
from studies.services.variants import fit_variant

SMALL = ["--subjects", "8", "--trials", "40"]


class CommandLineTests(unittest.TestCase):
    """
    Тесты командной строки:
    - коды возврата 0 / 1 / 2
    - заголовок с seed и воспроизводимость вывода
    - simulate -> CSV -> fit совпадает с подгонкой в памяти
    - файл конфигурации
    """

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.tmp = Path(tmp.name)

    def run_cli(self, *args: str) -> tuple[int, str, str]:
        stdout, stderr = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            code = main(list(args))
        return code, stdout.getvalue(), stderr.getvalue()

    def simulate(self, name: str = "data.csv", *extra: str) -> Path:
        path = self.tmp / name
        code, _, stderr = self.run_cli(
            "simulate", "--sigma-alpha", "32", "--seed", "5", *SMALL, *extra, "--out", str(path)
        )
        self.assertEqual(code, 0, stderr)
        return path

    def test_simulate_rows_and_header(self):
        path = self.tmp / "d.csv"
        code, _, _ = self.run_cli(
            "simulate",
            "--generator",
            "amp_abs",
            "--subjects",
            "40",
            "--trials",
            "100",
            "--sigma-alpha",
            "32",
            "--seed",
            "7",
            "--out",
            str(path),
        )
        self.assertEqual(code, 0)
        lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[0], "# seed=7")
        self.assertEqual(lines[1], ",".join(CSV_COLUMNS))
        self.assertEqual(len(lines) - 2, 4000)

    def test_simulate_is_reproducible(self):
        first = self.simulate("first.csv").read_bytes()
        second = self.simulate("second.csv").read_bytes()
        self.assertEqual(first, second)
        code, stdout, _ = self.run_cli("simulate", "--seed", "5", "--sigma-alpha", "32", *SMALL)
        self.assertEqual(code, 0)
        self.assertEqual(stdout.encode("utf-8"), first)

    def test_simulate_preset_and_confound(self):
        code, stdout, stderr = self.run_cli(
            "simulate", "--preset", "phase_power", "--with-latent", "--report-confound", *SMALL
        )
        self.assertEqual(code, 0)
        self.assertIn("latent", stdout.splitlines()[1])
        self.assertIn("# latent ~ factor_within:", stderr)

    def test_fit_table(self):
        path = self.simulate()
        code, stdout, _ = self.run_cli("fit", "--model", "LMMsine", "--data", str(path))
        self.assertEqual(code, 0)
        self.assertTrue(stdout.startswith("# seed=5\n"))
        self.assertIn("A. parametric coefficients", stdout)
        self.assertIn("factor_withinB", stdout)

    def test_fit_matches_in_memory(self):
        path = self.simulate()
        code, stdout, _ = self.run_cli(
            "fit", "--model", "LMMsine", "--data", str(path), "--format", "csv"
        )
        self.assertEqual(code, 0)
        params = SimParams(n_subjects=8, n_trials=40, sigma_alpha=32.0, seed=5)
        frame = generate("amp", params).public_frame()
        expected = format_fit(fit_variant("LMMsine", frame, compute_ci=True), "csv")
        self.assertEqual(stdout, "# seed=5\n" + expected)

    def test_acf(self):
        path = self.simulate()
        out = self.tmp / "acf.csv"
        code, _, _ = self.run_cli("acf", "--data", str(path), "--max-lag", "10", "--out", str(out))
        self.assertEqual(code, 0)
        lines = out.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[:2], ["# seed=5", "lag,acf"])
        self.assertEqual(len(lines), 2 + 11)

    def test_power_and_type1(self):
        args = ["--models", "LMMmin", "--reps", "2", "--base-seed", "3", *SMALL]
        code, stdout, _ = self.run_cli("power", *args)
        self.assertEqual(code, 0)
        self.assertTrue(stdout.startswith("# seed=3\n"))
        self.assertIn("Study: generator=amp_abs reps=2 power", stdout)

        code, stdout, _ = self.run_cli("type1", *args, "--format", "csv")
        self.assertEqual(code, 0)
        self.assertIn("section,model,name,field,value", stdout)

    def test_appendix_demo(self):
        code, stdout, _ = self.run_cli("appendix-demo", "--n", "2000", "--groups", "200")
        self.assertEqual(code, 0)
        self.assertTrue(stdout.startswith("# seed=98\n"))
        self.assertIn("V0 analytic:", stdout)

    def test_usage_errors(self):
        path = self.simulate()
        cases = [
            ("simulate", "--no-such-flag"),
            ("simulate", "--design", "latin"),
            ("fit", "--model", "LMMsine", "--data", str(self.tmp / "missing.csv")),
            ("fit", "--model", "LMMsine", "--data", str(path), "--with-bug"),
            ("power", "--models", "LMMfoo"),
            ("appendix-demo", "--n", "1001", "--groups", "100"),
            ("no-such-command",),
        ]
        for args in cases:
            with self.subTest(args=args):
                code, _, _ = self.run_cli(*args)
                self.assertEqual(code, 2)

    def test_runtime_errors(self):
        broken = self.tmp / "broken.csv"
        broken.write_text("subject,trial,time,factor_within,factor_between\n1,1,0.0,A,X\n")
        code, _, stderr = self.run_cli("fit", "--model", "LMMmin", "--data", str(broken))
        self.assertEqual(code, 1)
        self.assertIn("Ошибка:", stderr)
        self.assertIn("response", stderr)

        code, _, _ = self.run_cli("simulate", "--trials", "41")
        self.assertEqual(code, 1)

    def test_config_file(self):
        config = self.tmp / "run.env"
        config.write_text("subjects=4\ntrials=20\nseed=11\n")
        code, stdout, _ = self.run_cli("--config", str(config), "simulate")
        self.assertEqual(code, 0)
        lines = stdout.splitlines()
        self.assertEqual(lines[0], "# seed=11")
        self.assertEqual(len(lines) - 2, 80)

        code, stdout, _ = self.run_cli("--config", str(config), "simulate", "--trials", "10")
        self.assertEqual(len(stdout.splitlines()) - 2, 40)

        config.write_text("subjects=4\nflavour=vanilla\n")
        code, _, _ = self.run_cli("--config", str(config), "simulate")
        self.assertEqual(code, 2)
