from .power import build_study_command

command = build_study_command("type1", null_mode=True)
