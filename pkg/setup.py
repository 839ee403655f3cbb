from setuptools import setup, find_packages

setup(name='phmmutils',
      version='0.1',
      description='Partially hidden Markov models with weighted likelihoods',
      long_description='fitting, cross-validation, decoding and feature pipelines '
                       'for hidden Markov models with sparse state labels',
      classifiers=[
          'Development Status :: 3 - Alpha',
          'License :: OSI Approved :: MIT License',
          'Programming Language :: Python :: 3.9',
          'Topic :: Scientific/Engineering :: Information Analysis',
      ],
      keywords='hidden markov model semi-supervised biologging dive',
      license='MIT',
      packages=find_packages(exclude=['tests']),
      python_requires='>=3.9',
      install_requires=[
          'numpy>=1.22',
          'pandas>=1.4',
          'scipy>=1.9',
          'numba>=0.56',
          'scikit-learn>=1.1',
          'joblib>=1.1',
          'PyYAML>=6.0',
      ],
      extras_require={'test': ['pytest>=7']},
      package_data={'phmmutils': ['presets/*.yaml']},
      include_package_data=True,
      entry_points={'console_scripts': ['phmmutils=phmmutils.cli:main']},
      zip_safe=False)
