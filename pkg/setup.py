import setuptools

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

with open("VERSION", "r", encoding="utf-8") as f:
    version = f.read().strip()

setuptools.setup(
    name="zmlloco",
    author="zmlloco developers",
    version=version,
    description="ZMP-guided dynamic-balance humanoid locomotion on narrow terrains",
    long_description=long_description,
    long_description_content_type="text/markdown",
    license="GPLv3+",
    python_requires=">=3.8",
    packages=[
        "zml_util",
        "zml_dynamics",
        "zml_balance",
        "zml_terrain",
        "zml_env",
        "zml_learn",
        "zml_cli",
    ],
    py_modules=["zmlloco"],
    install_requires=["numpy>=1.22", "scipy>=1.8", "torch>=1.13", "PyYAML>=5.4"],
    data_files=[
        (
            "share/zmlloco/config",
            [
                "config/zml-default-config.yml",
                "config/robot-desk21.yml",
                "config/robot-biped10.yml",
                "config/smoke.yml",
            ],
        )
    ],
    entry_points={"console_scripts": ["zmlloco=zml_cli.Cli:main"]},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "License :: OSI Approved :: " "GNU General Public License v3 or later (GPLv3+)",
        "Intended Audience :: Science/Research",
        "Operating System :: OS Independent",
    ],
)
