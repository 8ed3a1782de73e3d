from pathlib import Path


def test_main_imports():
    """
    This test just ensures that main.py can be imported
    without running a command or crashing.
    """
    import importlib

    module = importlib.import_module("main")
    assert module is not None
    assert callable(module.main)


def test_version_flag_prints_version_file(capsys):
    import main

    expected = (Path(main.__file__).parent / "VERSION").read_text(encoding="utf-8").strip()
    assert main.main(["--version"]) == 0
    assert capsys.readouterr().out.strip() == expected


def test_main_forwards_exit_codes():
    import main

    assert main.main(["verify"]) == 1
