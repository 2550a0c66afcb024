import logging
import re
import shutil
from pathlib import Path

from hspn.common.constants import SAMPLES_DIR

SUCCESS_FILE_NAME = "_SUCCESS"


class Dataset:
    """
    A synthetic dataset is a directory holding one container file per sample under `samples/`
    plus a manifest describing every sample.

    A dataset is marked as complete/done using an empty file called "_SUCCESS"
    """
    def __init__(self, path, part_re=re.compile(r"sample-([0-9]+)\.h5"), force=False):
        self.path = Path(path)
        self.part_re = part_re
        self.force = force

    @property
    def samples_path(self):
        return self.path / SAMPLES_DIR

    def mark_done(self):
        if self.path.is_dir():
            (self.path / SUCCESS_FILE_NAME).touch()

    def is_done(self):
        return (self.path / SUCCESS_FILE_NAME).exists()

    def prepare(self):
        if self.path.exists() and any(self.path.iterdir()):
            if not self.force:
                raise FileExistsError(f"{self.path} is not empty, use force to overwrite it")
            logging.warning(f"Removing existing dataset directory {self.path}")
            shutil.rmtree(self.path)
        self.samples_path.mkdir(parents=True, exist_ok=True)

    def list_parts(self):
        if not self.samples_path.exists():
            raise FileNotFoundError(f"Path {self.samples_path} does not exist")

        parts = [f for f in self.samples_path.iterdir() if f.is_file() and self.part_re.match(f.name)]

        return sorted(parts, key=lambda f: int(self.part_re.match(f.name).groups()[0]))

    def parts_by_id(self):
        return {f.stem: f for f in self.list_parts()}
