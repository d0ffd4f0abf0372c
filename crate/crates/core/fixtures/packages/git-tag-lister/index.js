const { exec } = require('child_process')

function buildCommand(repo, pattern) {
  const filter = pattern ? ' -l ' + pattern : ''
  return 'git -C ' + repo + ' tag' + filter
}

function listTags(repo, pattern, cb) {
  const cmd = buildCommand(repo, pattern)
  exec(cmd, (err, stdout) => {
    if (err) {
      return cb(err)
    }
    cb(null, stdout.split('\n').filter(Boolean))
  })
}

module.exports = { listTags }
